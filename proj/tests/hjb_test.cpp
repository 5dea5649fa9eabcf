#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "support.hpp"

namespace mfgsig {
namespace {

using testing::small_problem;
using testing::with_model;

PositionFlow uniform_flow(const MfgProblem& pb) {
  return PositionFlow::constant(pb.quad().size(), pb.grid().Nt(), pb.rho0());
}

TEST(Hjb, ZeroCostGivesZeroValue) {
  const MfgProblem pb = small_problem("zero");
  const ValueField v = solve_hjb(pb, uniform_flow(pb));
  for (double u : v.u.data()) EXPECT_EQ(u, 0.0);
}

// F = c, G = 0: the optimal control is zero and u(t) = c (T - t).
TEST(Hjb, ConstantRunningCostIntegratesExactly) {
  const MfgProblem pb = with_model(small_problem(), std::make_shared<ConstantFlowCost>(2.0));
  const ValueField v = solve_hjb(pb, uniform_flow(pb));
  const Grid& g = pb.grid();
  for (int k = 0; k < g.Nt(); ++k) {
    for (int j = 0; j < g.Nz(); ++j) {
      for (int i = 0; i < g.Nx(); ++i) EXPECT_NEAR(v.u(k, j, i), 2.0 * (g.T() - g.time(k)), 1e-12);
    }
  }
}

TEST(Hjb, StateFreeCostsGiveSignalFreeValue) {
  auto model = std::make_shared<FunctionalCostModel>(
      "state_free",
      [](double, double x, const PositionDensity&, int) { return std::sin(2 * std::numbers::pi * x); },
      [](double, double x, const PositionDensity&, int) { return std::cos(2 * std::numbers::pi * x); },
      false);
  const MfgProblem pb = with_model(small_problem(), model);
  const ValueField v = solve_hjb(pb, uniform_flow(pb));
  const Grid& g = pb.grid();
  for (int k = 0; k < g.Nt(); ++k) {
    for (int i = 0; i < g.Nx(); ++i) {
      for (int j = 1; j < g.Nz(); ++j) EXPECT_NEAR(v.u(k, j, i), v.u(k, 0, i), 5e-8);
    }
  }
}

TEST(Hjb, TerminalSliceIsTheExpectedTerminalCost) {
  const MfgProblem pb = small_problem();
  const auto flow = uniform_flow(pb);
  const ValueField v = solve_hjb(pb, flow);
  const Grid& g = pb.grid();
  const auto level = flow.level(g.Nt() - 1);
  for (int j = 0; j < g.Nz(); j += 5) {
    for (int i = 0; i < g.Nx(); i += 3) {
      const double expected = expected_terminal_cost(pb.model(), pb.quad(), pb.kernel(), g.T(),
                                                     g.z(j), g.x(i), level);
      EXPECT_NEAR(v.u(g.Nt() - 1, j, i), expected, 1e-14);
    }
  }
}

TEST(Hjb, QuadraticControlIsMinusCentredGradient) {
  const MfgProblem pb = small_problem();
  const ValueField v = solve_hjb(pb, uniform_flow(pb));
  const ControlField c = extract_control(pb, v);
  const Grid& g = pb.grid();
  for (int k : {0, g.Nt() / 2, g.Nt() - 1}) {
    for (int j = 0; j < g.Nz(); j += 4) {
      for (int i = 0; i < g.Nx(); ++i) {
        const double grad =
            (v.u(k, j, (i + 1) % g.Nx()) - v.u(k, j, (i + g.Nx() - 1) % g.Nx())) / (2 * g.dx());
        EXPECT_NEAR(c.alpha(k, j, i), -grad, 1e-12);
      }
    }
  }
}

TEST(Hjb, ManufacturedSolutionConverges) {
  const ManufacturedHjb mf;
  const Grid coarse(1.0, 16, 16, 64, 4.0);
  const Grid fine = coarse.refined();
  const double e1 = mf.error(coarse, 1.0, 0.5);
  const double e2 = mf.error(fine, 1.0, 0.5);
  EXPECT_LT(e2, e1 / 1.8);
}

TEST(Hjb, RejectsMismatchedInputs) {
  const MfgProblem pb = small_problem();
  const Grid& g = pb.grid();
  EXPECT_THROW(solve_hjb(pb, Field3(g.Nt() - 1, g.Nz(), g.Nx()), Slice(g.slice_size())),
               std::invalid_argument);
  EXPECT_THROW(solve_hjb(pb, Field3(g), Slice(3)), std::invalid_argument);
  Slice bad(g.slice_size(), 0.0);
  bad[5] = std::nan("");
  EXPECT_THROW(solve_hjb(pb, Field3(g), bad), SolverError);
}

// Monte Carlo value of the computed policy against u(t0, 0, x0).
TEST(Hjb, PolicyValueMatchesMonteCarlo) {
  const MfgProblem pb = small_problem("uncoupled", 40, 32, 48);
  const auto flow = uniform_flow(pb);
  const ValueField v = solve_hjb(pb, flow);
  const ControlField c = extract_control(pb, v);
  PolicyCheckOptions opt;
  opt.n_paths = 20000;
  opt.x0 = 0.3;
  opt.substeps = 4;  // keeps the Euler bias of the paths below the allowance
  const MfgProblem fine = pb.with_grid(pb.grid().refined());
  const ValueField vf = solve_hjb(fine, PositionFlow::constant(fine.quad().size(), fine.grid().Nt(), fine.rho0()));
  const double t0 = pb.grid().t0();
  opt.allowance = 2.0 * std::abs(interpolate_field(pb.grid(), v.u, t0, 0.0, opt.x0) -
                                 interpolate_field(fine.grid(), vf.u, t0, 0.0, opt.x0));
  const PolicyCheck r = policy_value_check(pb, v, c, flow, opt);
  EXPECT_TRUE(r.passed()) << r.estimate << " +- " << r.std_error << " vs " << r.reference
                          << " allowance " << r.allowance;
  EXPECT_EQ(r.exploded, 0);
  // Block seeding makes the estimate independent of the worker count.
  set_workers(1);
  const PolicyCheck a = policy_value_check(pb, v, c, flow, opt);
  set_workers(3);
  const PolicyCheck b = policy_value_check(pb, v, c, flow, opt);
  set_workers(0);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.std_error, b.std_error);
}

}  // namespace
}  // namespace mfgsig
