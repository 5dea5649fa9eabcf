#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

namespace mfgsig {
namespace {

using testing::small_problem;

ControlField wavy_control(const MfgProblem& pb) {
  const Grid& g = pb.grid();
  ControlField c{g, Field3(g)};
  for (int k = 0; k < g.Nt(); ++k) {
    for (int j = 0; j < g.Nz(); ++j) {
      for (int i = 0; i < g.Nx(); ++i) {
        c.alpha(k, j, i) = 0.6 * std::sin(2 * std::numbers::pi * g.x(i)) +
                           0.3 * std::tanh(pb.kernel().posterior_mean(g.time(k), g.z(j)));
      }
    }
  }
  return c;
}

double total_mass(const Grid& g, std::span<const double> slice) {
  double m = 0.0;
  for (double v : slice) m += v;
  return m * g.dx() * g.dz();
}

TEST(Fp, ConservesMassAndPositivity) {
  const MfgProblem pb = small_problem();
  const ControlField c = wavy_control(pb);
  for (auto transport : {SignalTransport::kComovingFrame, SignalTransport::kFittedImplicit}) {
    FpLimits lim;
    lim.transport = transport;
    const StateDensity m = solve_fp_per_state(pb, c, 0.0, lim);
    EXPECT_LT(m.max_step_mass_drift, 1e-12);
    EXPECT_EQ(m.clipped_mass, 0.0);
    const double m0 = total_mass(pb.grid(), m.m.slice(0));
    for (int k = 0; k < pb.grid().Nt(); ++k) EXPECT_NEAR(total_mass(pb.grid(), m.m.slice(k)), m0, 1e-12);
    for (double v : m.m.data()) EXPECT_GE(v, 0.0);
  }
}

TEST(Fp, ZeroControlSignalMarginalIsGaussian) {
  const MfgProblem pb = small_problem("zero", 50, 16, 96);
  const Grid& g = pb.grid();
  ControlField zero{g, Field3(g)};
  const double s = pb.quad().max_abs_node();
  const StateDensity m = solve_fp_per_state(pb, zero, s);
  const int K = g.Nt() - 1;
  // Cell masses of N(s T, sigma^2 T) from the normal CDF.
  const GaussianLaw law = pb.kernel().signal_law_conditional(g.T(), s);
  double err = 0.0;
  for (int j = 0; j < g.Nz(); ++j) {
    double row = 0.0;
    for (int i = 0; i < g.Nx(); ++i) row += m.m(K, j, i) * g.dx();
    err += std::abs(row * g.dz() - law.mass(g.z_face(j), g.z_face(j + 1)));
  }
  EXPECT_LT(err, 2e-2);
}

TEST(Fp, TauRowsAreConditionalDensities) {
  const MfgProblem pb = small_problem();
  const FactorDensity tau = solve_tau(pb, wavy_control(pb));
  EXPECT_LT(tau.max_x_mass_error, 1e-12);
  for (double v : tau.tau.data()) EXPECT_GE(v, 0.0);
}

TEST(Fp, FactorisationErrorShrinksUnderRefinement) {
  const MfgProblem coarse = small_problem("product_differentiation", 25, 16, 32);
  const MfgProblem fine = coarse.with_grid(coarse.grid().refined());
  auto error = [](const MfgProblem& pb) {
    const ControlField c = wavy_control(pb);
    const FactorDensity tau = solve_tau(pb, c);
    const double s = pb.quad().max_abs_node();
    return factorization_error(pb, solve_fp_per_state(pb, c, s), tau, pb.grid().Nt() - 1);
  };
  const double e1 = error(coarse), e2 = error(fine);
  EXPECT_LT(e1, 0.1);
  EXPECT_GT(e1 / e2, 1.5);
}

// Discrete duality: with the linear fitted scheme, sum(u m) is the same at
// every level when u solves the transposed backward problem.
TEST(Fp, AdjointDualityIdentity) {
  const MfgProblem pb = small_problem();
  const Grid& g = pb.grid();
  const ControlField c = wavy_control(pb);
  FpLimits lim;
  lim.transport = SignalTransport::kFittedImplicit;
  const double s = 0.8;
  const StateDensity m = solve_fp_per_state(pb, c, s, lim);
  Slice terminal(g.slice_size());
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (double& v : terminal) v = u01(rng);
  const Field3 u = solve_adjoint_linear(pb, c, s, terminal);
  auto pairing = [&](int k) {
    double acc = 0.0;
    const auto a = u.slice(k), b = m.m.slice(k);
    for (std::size_t n = 0; n < a.size(); ++n) acc += a[n] * b[n];
    return acc * g.dx() * g.dz();
  };
  const double last = pairing(g.Nt() - 1);
  for (int k = 0; k < g.Nt(); k += 5) EXPECT_NEAR(pairing(k), last, 1e-12 * std::abs(last));
}

TEST(Fp, ShiftColumnsMovesWholeCells) {
  const Grid g(1.0, 4, 8, 12, 3.0);
  Slice w(g.slice_size());
  for (std::size_t n = 0; n < w.size(); ++n) w[n] = static_cast<double>(n);
  Slice out(w.size());
  detail::shift_columns(g, w, 2.0, out);
  for (int j = 0; j < g.Nz(); ++j) {
    for (int i = 0; i < g.Nx(); ++i) {
      const double expected = j >= 2 ? w[(j - 2) * g.Nx() + i] : 0.0;
      EXPECT_EQ(out[j * g.Nx() + i], expected);
    }
  }
  // Half-cell shift averages neighbours and keeps interior mass.
  detail::shift_columns(g, w, 0.5, out);
  EXPECT_DOUBLE_EQ(out[5 * g.Nx() + 3], 0.5 * (w[5 * g.Nx() + 3] + w[4 * g.Nx() + 3]));
}

TEST(Fp, LimitedTransportRejectsLargeCourantNumbers) {
  const MfgProblem pb = small_problem("zero", 4, 16, 64);
  const Grid& g = pb.grid();
  ControlField zero{g, Field3(g)};
  FpLimits lim;
  lim.transport = SignalTransport::kLimitedExplicit;
  EXPECT_THROW(solve_fp_per_state(pb, zero, 3.0, lim), SolverError);
}

TEST(Fp, PositionMarginalsAreNormalised) {
  const MfgProblem pb = small_problem();
  const ControlField c = wavy_control(pb);
  const FactorDensity tau = solve_tau(pb, c);
  for (int k : {0, 10, pb.grid().Nt() - 1}) {
    const auto r = position_marginal(pb, tau, 0.5, k);
    EXPECT_NEAR(r.rho.mass(), 1.0, 1e-14);
    EXPECT_NEAR(r.renormalization, 1.0, 1e-2);
  }
  EXPECT_THROW(solve_tau(pb, ControlField{pb.grid(), Field3(3, 3, 3)}), std::invalid_argument);
}

}  // namespace
}  // namespace mfgsig
