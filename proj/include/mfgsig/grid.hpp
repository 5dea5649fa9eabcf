#pragma once

// Grids for time, the periodic position axis and the truncated signal axis,
// plus the Gauss-Hermite quadrature of the N(0,1) state prior.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfgsig/belief.hpp"

namespace mfgsig {

struct GridSpec {
  double T = 1.0;
  int Nt = 100;
  int Nx = 64;
  int Nz = 64;
  double Zmax = 0.0;  // 0 means derive from the quadrature (see derive_zmax)
  double t0 = 0.0;    // 0 means T / Nt
};

// Time levels t_k = t0 + k dt, k = 0..Nt-1, with t_{Nt-1} = T.
// Position cells centred at x_i = (i + 1/2)/Nx on the unit torus.
// Signal cells centred at z_j = -Zmax + (j + 1/2) dz.
class Grid {
 public:
  Grid() : Grid(1.0, 2, 8, 8, 1.0) {}
  Grid(double T, int Nt, int Nx, int Nz, double Zmax, double t0 = 0.0)
      : T_(T), Nt_(Nt), Nx_(Nx), Nz_(Nz), Zmax_(Zmax), t0_(t0 > 0.0 ? t0 : T / Nt) {
    if (!(T > 0.0)) throw std::invalid_argument("grid.T must be > 0");
    if (Nt < 2) throw std::invalid_argument("grid.Nt must be >= 2");
    if (Nx < 8) throw std::invalid_argument("grid.Nx must be >= 8");
    if (Nz < 8) throw std::invalid_argument("grid.Nz must be >= 8");
    if (!(Zmax > 0.0)) throw std::invalid_argument("grid.Zmax must be > 0");
    if (!(t0_ > 0.0 && t0_ < T)) throw std::invalid_argument("grid.t0 must lie in (0, T)");
  }

  double T() const { return T_; }
  int Nt() const { return Nt_; }
  int Nx() const { return Nx_; }
  int Nz() const { return Nz_; }
  double Zmax() const { return Zmax_; }
  double t0() const { return t0_; }

  double dt() const { return (T_ - t0_) / (Nt_ - 1); }
  double time(int k) const { return k == Nt_ - 1 ? T_ : t0_ + k * dt(); }
  double dx() const { return 1.0 / Nx_; }
  double dz() const { return 2.0 * Zmax_ / Nz_; }
  double x(int i) const { return (i + 0.5) * dx(); }
  double z(int j) const { return -Zmax_ + (j + 0.5) * dz(); }
  double z_face(int j) const { return -Zmax_ + j * dz(); }

  std::size_t slice_size() const { return static_cast<std::size_t>(Nz_) * Nx_; }

  // One uniform refinement: every count doubled, start-up time re-derived.
  Grid refined() const { return Grid(T_, 2 * Nt_, 2 * Nx_, 2 * Nz_, Zmax_); }

 private:
  double T_;
  int Nt_, Nx_, Nz_;
  double Zmax_;
  double t0_;
};

// Smallest signal bound keeping the conditional signal law inside the box up
// to four standard deviations for every quadrature node.
inline double derive_zmax(double s_max, double sigma, double T) {
  return s_max * T + 4.0 * sigma * std::sqrt(T);
}

struct StateQuadrature {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
  double max_abs_node() const {
    double m = 0.0;
    for (double s : nodes) m = std::max(m, std::abs(s));
    return m;
  }
  double moment(int order) const {
    double acc = 0.0;
    for (std::size_t q = 0; q < size(); ++q) acc += weights[q] * std::pow(nodes[q], order);
    return acc;
  }
};

// Gauss-Hermite rule for the standard normal (Golub-Welsch on the
// probabilists' Hermite Jacobi matrix), symmetrised and normalised.
inline StateQuadrature make_state_quadrature(int Q) {
  if (Q < 2) throw std::invalid_argument("make_state_quadrature: Q must be >= 2");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(Q);
  Eigen::VectorXd sub(Q - 1);
  for (int k = 1; k < Q; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("make_state_quadrature: eigen-decomposition failed");
  }
  StateQuadrature quad;
  quad.nodes.resize(Q);
  quad.weights.resize(Q);
  for (int k = 0; k < Q; ++k) {
    quad.nodes[k] = solver.eigenvalues()(k);
    const double v = solver.eigenvectors()(0, k);
    quad.weights[k] = v * v;
  }
  for (int k = 0; k < Q / 2; ++k) {
    const int m = Q - 1 - k;
    const double s = 0.5 * (quad.nodes[m] - quad.nodes[k]);
    const double w = 0.5 * (quad.weights[m] + quad.weights[k]);
    quad.nodes[k] = -s;
    quad.nodes[m] = s;
    quad.weights[k] = w;
    quad.weights[m] = w;
  }
  if (Q % 2 == 1) quad.nodes[Q / 2] = 0.0;
  const double total = std::accumulate(quad.weights.begin(), quad.weights.end(), 0.0);
  for (double& w : quad.weights) w /= total;
  return quad;
}

struct PosteriorWeights {
  std::vector<double> weights;
  bool fallback = false;  // every unnormalised weight underflowed; uniform used
};

// Bayes reweighting of the fixed prior nodes given Z_t = z:
// w_q phi_{s_q t, sigma^2 t}(z), normalised. Evaluated in log-space.
inline void posterior_weights_into(const StateQuadrature& quad, const BeliefKernel& kernel,
                                   double t, double z, std::span<double> out,
                                   bool* fallback = nullptr) {
  const std::size_t Q = quad.size();
  if (!(t > 0.0)) {
    std::copy(quad.weights.begin(), quad.weights.end(), out.begin());
    if (fallback) *fallback = false;
    return;
  }
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < Q; ++q) {
    out[q] = std::log(quad.weights[q]) +
             kernel.signal_law_conditional(t, quad.nodes[q]).log_density(z);
    max_log = std::max(max_log, out[q]);
  }
  if (!(max_log > std::log(std::numeric_limits<double>::min()))) {
    std::fill(out.begin(), out.begin() + Q, 1.0 / Q);
    if (fallback) *fallback = true;
    return;
  }
  double total = 0.0;
  for (std::size_t q = 0; q < Q; ++q) {
    out[q] = std::exp(out[q] - max_log);
    total += out[q];
  }
  for (std::size_t q = 0; q < Q; ++q) out[q] /= total;
  if (fallback) *fallback = false;
}

inline PosteriorWeights posterior_weights(const StateQuadrature& quad, const BeliefKernel& kernel,
                                          double t, double z) {
  PosteriorWeights pw;
  pw.weights.resize(quad.size());
  posterior_weights_into(quad, kernel, t, z, pw.weights, &pw.fallback);
  return pw;
}

// Cell-averaged density of a law on the signal cells, truncated to the box
// and renormalised so that sum(values) * dz == 1.
inline std::vector<double> signal_cell_density(const Grid& grid, const GaussianLaw& law) {
  const int Nz = grid.Nz();
  std::vector<double> out(Nz, 0.0);
  if (law.degenerate()) {
    int j = static_cast<int>(std::floor((law.mean + grid.Zmax()) / grid.dz()));
    j = std::clamp(j, 0, Nz - 1);
    out[j] = 1.0 / grid.dz();
    return out;
  }
  double total = 0.0;
  for (int j = 0; j < Nz; ++j) {
    out[j] = law.mass(grid.z_face(j), grid.z_face(j + 1));
    total += out[j];
  }
  if (!(total > 0.0)) {
    throw std::runtime_error("signal_cell_density: law has no mass inside the signal box");
  }
  for (double& v : out) v /= total * grid.dz();
  return out;
}

// Position density on the torus grid: values per cell, sum(values) * dx == 1.
struct PositionDensity {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }

  double mass() const {
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(size());
  }

  static PositionDensity uniform(int Nx) { return {std::vector<double>(Nx, 1.0)}; }

  // Wrapped Gaussian bump, cell-averaged by sampling the periodic sum at the
  // cell centre and renormalised.
  static PositionDensity bump(int Nx, double center, double width) {
    if (!(width > 0.0)) throw std::invalid_argument("bump width must be > 0");
    PositionDensity rho{std::vector<double>(Nx, 0.0)};
    for (int i = 0; i < Nx; ++i) {
      const double x = (i + 0.5) / Nx;
      double acc = 0.0;
      for (int w = -8; w <= 8; ++w) {
        const double d = x - center + w;
        acc += std::exp(-0.5 * d * d / (width * width));
      }
      rho.values[i] = acc;
    }
    rho.normalize();
    return rho;
  }

  // Rescales to unit mass and returns the factor that was divided out.
  double normalize() {
    const double m = mass();
    if (!(m > 0.0)) throw std::runtime_error("PositionDensity: non-positive mass");
    for (double& v : values) v /= m;
    return m;
  }
};

inline double torus_distance(double a, double b) {
  double d = std::fmod(a - b, 1.0);
  if (d < 0.0) d += 1.0;
  return std::min(d, 1.0 - d);
}

}  // namespace mfgsig
