#pragma once

#include <memory>
#include <stdexcept>
#include <utility>

#include "mfgsig/belief.hpp"
#include "mfgsig/costs.hpp"
#include "mfgsig/field.hpp"
#include "mfgsig/grid.hpp"

namespace mfgsig {

// Posterior node weights for every (level, signal cell): [k][j][q].
class PosteriorTable {
 public:
  PosteriorTable(const Grid& grid, const StateQuadrature& quad, const BeliefKernel& kernel)
      : Q_(quad.size()), Nz_(grid.Nz()), weights_(static_cast<std::size_t>(grid.Nt()) * Nz_ * Q_) {
    for (int k = 0; k < grid.Nt(); ++k) {
      for (int j = 0; j < Nz_; ++j) {
        bool fell_back = false;
        posterior_weights_into(quad, kernel, grid.time(k), grid.z(j),
                               std::span<double>(weights_.data() + offset(k, j), Q_), &fell_back);
        if (fell_back) ++fallbacks_;
      }
    }
  }

  std::span<const double> at(int k, int j) const { return {weights_.data() + offset(k, j), Q_}; }
  // Number of (t, z) cells where the uniform fallback was used.
  int fallbacks() const { return fallbacks_; }

 private:
  std::size_t offset(int k, int j) const { return (static_cast<std::size_t>(k) * Nz_ + j) * Q_; }
  std::size_t Q_;
  int Nz_;
  std::vector<double> weights_;
  int fallbacks_ = 0;
};

// Everything a solve needs besides the candidate flow: grid, signal kernel,
// position noise sigma', state quadrature, cost model and initial density.
class MfgProblem {
 public:
  MfgProblem(Grid grid, BeliefKernel kernel, double sigma_prime, StateQuadrature quad,
             std::shared_ptr<const CostModel> model, PositionDensity rho0)
      : grid_(std::move(grid)),
        kernel_(kernel),
        sigma_prime_(sigma_prime),
        quad_(std::move(quad)),
        model_(std::move(model)),
        rho0_(std::move(rho0)),
        posterior_(grid_, quad_, kernel_) {
    if (!(sigma_prime >= 0.0)) throw std::invalid_argument("model.sigma_prime must be >= 0");
    if (!model_) throw std::invalid_argument("MfgProblem: cost model is null");
    if (rho0_.size() != static_cast<std::size_t>(grid_.Nx())) {
      throw std::invalid_argument("MfgProblem: initial density size does not match grid.Nx");
    }
    verify_strong_convexity(*model_);
  }

  const Grid& grid() const { return grid_; }
  const BeliefKernel& kernel() const { return kernel_; }
  double sigma_prime() const { return sigma_prime_; }
  const StateQuadrature& quad() const { return quad_; }
  const CostModel& model() const { return *model_; }
  std::shared_ptr<const CostModel> model_ptr() const { return model_; }
  const PositionDensity& rho0() const { return rho0_; }
  const PosteriorTable& posterior() const { return posterior_; }

  // Same problem on another grid.
  MfgProblem with_grid(const Grid& g) const {
    return MfgProblem(g, kernel_, sigma_prime_, quad_, model_, resample(rho0_, g.Nx()));
  }

 private:
  static PositionDensity resample(const PositionDensity& rho, int Nx) {
    if (rho.size() == static_cast<std::size_t>(Nx)) return rho;
    // Cell averages of the piecewise-constant density.
    const int n = static_cast<int>(rho.size());
    PositionDensity out{std::vector<double>(Nx, 0.0)};
    const int fine = n * Nx;
    for (int f = 0; f < fine; ++f) out[f / n] += rho[f / Nx];
    for (double& v : out.values) v /= n;
    out.normalize();
    return out;
  }

  Grid grid_;
  BeliefKernel kernel_;
  double sigma_prime_;
  StateQuadrature quad_;
  std::shared_ptr<const CostModel> model_;
  PositionDensity rho0_;
  PosteriorTable posterior_;
};

}  // namespace mfgsig
