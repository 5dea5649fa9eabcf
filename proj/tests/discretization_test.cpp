#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "support.hpp"

namespace mfgsig {
namespace {

double double_factorial(int n) {
  double r = 1.0;
  for (int k = n; k > 1; k -= 2) r *= k;
  return r;
}

TEST(Grid, Geometry) {
  const Grid g(2.0, 11, 8, 10, 5.0);
  EXPECT_DOUBLE_EQ(g.t0(), 2.0 / 11);
  EXPECT_DOUBLE_EQ(g.time(10), 2.0);
  EXPECT_NEAR(g.time(0) + 10 * g.dt(), 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(g.x(0), 1.0 / 16);
  EXPECT_DOUBLE_EQ(g.z(0), -5.0 + 0.5);
  EXPECT_DOUBLE_EQ(g.z_face(10), 5.0);
  const Grid r = g.refined();
  EXPECT_EQ(r.Nt(), 22);
  EXPECT_EQ(r.Nx(), 16);
  EXPECT_EQ(r.Nz(), 20);
  EXPECT_DOUBLE_EQ(r.t0(), 2.0 / 22);
  EXPECT_THROW(Grid(1.0, 1, 8, 8, 1.0), std::invalid_argument);
  EXPECT_THROW(Grid(1.0, 4, 4, 8, 1.0), std::invalid_argument);
  EXPECT_THROW(Grid(1.0, 4, 8, 8, -1.0), std::invalid_argument);
  EXPECT_THROW(Grid(1.0, 4, 8, 8, 1.0, 1.5), std::invalid_argument);
}

TEST(Grid, DerivedSignalBound) {
  EXPECT_DOUBLE_EQ(derive_zmax(3.0, 0.5, 4.0), 12.0 + 4.0);
}

TEST(Quadrature, ReproducesNormalMoments) {
  for (int Q : {4, 9, 16}) {
    const auto quad = make_state_quadrature(Q);
    EXPECT_NEAR(quad.moment(0), 1.0, 1e-14);
    for (int p = 1; p < 2 * Q; ++p) {
      const double exact = p % 2 ? 0.0 : double_factorial(p - 1);
      // Odd moments cancel terms of size about E|X|^p, so scale by p!! instead.
      const double scale = double_factorial(p % 2 ? p : p - 1);
      EXPECT_NEAR(quad.moment(p), exact, 1e-11 * std::max(1.0, scale)) << "Q=" << Q << " p=" << p;
    }
    for (int q = 0; q < Q; ++q) {
      EXPECT_DOUBLE_EQ(quad.nodes[q], -quad.nodes[Q - 1 - q]);
      EXPECT_GT(quad.weights[q], 0.0);
    }
  }
  EXPECT_THROW(make_state_quadrature(1), std::invalid_argument);
}

TEST(Quadrature, PosteriorWeightsFollowBayes) {
  const auto quad = make_state_quadrature(8);
  const BeliefKernel k(0.8);
  const double t = 0.7, z = 1.1;
  const auto pw = posterior_weights(quad, k, t, z);
  std::vector<double> direct(8);
  double total = 0.0;
  for (int q = 0; q < 8; ++q) {
    const double d = z - quad.nodes[q] * t;
    direct[q] = quad.weights[q] * std::exp(-0.5 * d * d / (0.64 * t));
    total += direct[q];
  }
  for (int q = 0; q < 8; ++q) EXPECT_NEAR(pw.weights[q], direct[q] / total, 1e-14);
  EXPECT_FALSE(pw.fallback);
  // At t = 0 the prior weights come back unchanged.
  const auto prior = posterior_weights(quad, k, 0.0, 3.0);
  for (int q = 0; q < 8; ++q) EXPECT_DOUBLE_EQ(prior.weights[q], quad.weights[q]);
}

TEST(Quadrature, UnderflowFallsBackToUniform) {
  const auto quad = make_state_quadrature(4);
  const auto pw = posterior_weights(quad, BeliefKernel(0.1), 1e-4, 50.0);
  EXPECT_TRUE(pw.fallback);
  for (double w : pw.weights) EXPECT_DOUBLE_EQ(w, 0.25);
}

TEST(Grid, SignalCellDensityIsNormalised) {
  const Grid g(1.0, 10, 8, 40, 6.0);
  const auto v = signal_cell_density(g, GaussianLaw{1.0, 0.5});
  double mass = 0.0;
  for (double x : v) mass += x * g.dz();
  EXPECT_NEAR(mass, 1.0, 1e-14);
  const auto point = signal_cell_density(g, GaussianLaw{0.0, 0.0});
  EXPECT_DOUBLE_EQ(point[20], 1.0 / g.dz());
  EXPECT_THROW(signal_cell_density(g, GaussianLaw{100.0, 1e-4}), std::runtime_error);
}

TEST(Grid, PositionDensities) {
  const auto b = PositionDensity::bump(32, 0.1, 0.05);
  EXPECT_NEAR(b.mass(), 1.0, 1e-14);
  // Wrapped: the bump at 0.1 leaks across x = 0 into the last cells.
  EXPECT_GT(b[31], b[20]);
  EXPECT_DOUBLE_EQ(torus_distance(0.1, 0.9), 0.2);
  EXPECT_DOUBLE_EQ(torus_distance(-0.3, 0.3), 0.4);
  EXPECT_DOUBLE_EQ(torus_distance(2.25, 0.0), 0.25);
}

Eigen::VectorXd dense_solve(const std::vector<double>& lo, const std::vector<double>& di,
                            const std::vector<double>& up, const std::vector<double>& rhs,
                            bool periodic) {
  const int n = static_cast<int>(di.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    A(j, j) = di[j];
    if (j > 0) A(j, j - 1) = lo[j];
    if (j + 1 < n) A(j, j + 1) = up[j];
  }
  if (periodic) {
    A(0, n - 1) = lo[0];
    A(n - 1, 0) = up[n - 1];
  }
  return A.partialPivLu().solve(Eigen::Map<const Eigen::VectorXd>(rhs.data(), n));
}

TEST(Tridiagonal, MatchesDenseSolve) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (bool periodic : {false, true}) {
    const int n = 17;
    std::vector<double> lo(n), di(n), up(n), rhs(n), scratch;
    for (int j = 0; j < n; ++j) {
      lo[j] = u(rng);
      up[j] = u(rng);
      di[j] = 3.0 + u(rng);
      rhs[j] = u(rng);
    }
    const Eigen::VectorXd ref = dense_solve(lo, di, up, rhs, periodic);
    if (periodic) {
      solve_cyclic_tridiagonal(lo, di, up, rhs, scratch);
    } else {
      solve_tridiagonal(lo, di, up, rhs, scratch);
    }
    for (int j = 0; j < n; ++j) EXPECT_NEAR(rhs[j], ref(j), 1e-13);
  }
}

TEST(Tridiagonal, FittedDiffusionLimits) {
  EXPECT_DOUBLE_EQ(fitted_diffusion(0.0, -2.0, 0.1), 0.1);
  EXPECT_NEAR(fitted_diffusion(1.0, 1e-8, 0.1), 1.0, 1e-15);
  // Large Peclet: approaches the upwind value |v| h / 2.
  EXPECT_NEAR(fitted_diffusion(1e-6, 3.0, 0.1), 0.15, 1e-6);
  for (double v : {-5.0, -0.1, 0.3, 7.0}) EXPECT_GE(fitted_diffusion(0.2, v, 0.05), 0.5 * std::abs(v) * 0.05);
}

LineStencil random_stencil(bool periodic, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  LineStencil st = periodic ? LineStencil::periodic_line(n) : LineStencil::neumann(n);
  const std::size_t faces = st.P.size();
  for (std::size_t f = 0; f < faces; ++f) {
    if (!periodic && (f == 0 || f == faces - 1)) continue;  // closed boundary faces
    st.set_face(f, u(rng), 0.1, 1.0 / n);
  }
  return st;
}

TEST(Tridiagonal, AdvectiveStepPreservesConstantsAndOrder) {
  std::mt19937_64 rng(9);
  for (bool periodic : {false, true}) {
    const LineStencil st = random_stencil(periodic, 20, rng);
    LineWorkspace ws;
    std::vector<double> c(20, 2.5);
    implicit_advective_step(st, 0.05, c, ws);
    for (double v : c) EXPECT_NEAR(v, 2.5, 1e-13);
    // M-matrix: non-negative data stays non-negative.
    std::vector<double> p(20, 0.0);
    p[7] = 1.0;
    implicit_advective_step(st, 0.05, p, ws);
    for (double v : p) EXPECT_GE(v, 0.0);
  }
}

TEST(Tridiagonal, ConservativeStepIsTheTransposeAndConservesMass) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (bool periodic : {false, true}) {
    const int n = 24;
    const LineStencil st = random_stencil(periodic, n, rng);
    LineWorkspace ws;
    std::vector<double> a(n), b(n);
    for (int j = 0; j < n; ++j) {
      a[j] = u(rng);
      b[j] = u(rng);
    }
    std::vector<double> Aa = a, Bb = b;
    implicit_advective_step(st, 0.1, Aa, ws);
    implicit_conservative_step(st, 0.1, Bb, ws);
    double lhs = 0.0, rhs = 0.0, mass_before = 0.0, mass_after = 0.0;
    for (int j = 0; j < n; ++j) {
      lhs += Aa[j] * b[j];
      rhs += a[j] * Bb[j];
      mass_before += b[j];
      mass_after += Bb[j];
    }
    EXPECT_NEAR(lhs, rhs, 1e-13);
    EXPECT_NEAR(mass_after, mass_before, 1e-13);
  }
}

TEST(Field, InterpolationIsExactForBilinearData) {
  const Grid g(1.0, 5, 8, 10, 2.0);
  Field3 f(g);
  // Linear in z and periodic-linear data in x: test z-linearity at fixed x.
  for (int k = 0; k < g.Nt(); ++k) {
    for (int j = 0; j < g.Nz(); ++j) {
      for (int i = 0; i < g.Nx(); ++i) f(k, j, i) = 3.0 * g.z(j) + 2.0 * g.time(k) + (i == 2);
    }
  }
  const double t = 0.5 * (g.time(1) + g.time(2));
  EXPECT_NEAR(interpolate_field(g, f, t, 0.3, g.x(4)), 0.9 + 2.0 * t, 1e-13);
  EXPECT_NEAR(interpolate_field(g, f, t, 0.3, 0.5 * (g.x(2) + g.x(3))), 0.9 + 2.0 * t + 0.5,
              1e-13);
  // z beyond the last centre is clamped.
  EXPECT_NEAR(interpolate_field(g, f, g.T(), 5.0, g.x(4)), 3.0 * g.z(9) + 2.0, 1e-13);
  // Periodic wrap between the last and first cells.
  EXPECT_NEAR(interpolate_slice(g, f.slice(0), 0.3, 1.0), interpolate_slice(g, f.slice(0), 0.3, 0.0),
              1e-15);
}

}  // namespace
}  // namespace mfgsig
