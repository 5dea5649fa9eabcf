#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

namespace mfgsig {
namespace {

using testing::simpson;

// Posterior moments of S ~ N(0,1) given Z_t = z, by Simpson integration of
// the unnormalised density prior(s) * lik(z | s).
std::pair<double, double> posterior_by_simpson(double sigma, double t, double z) {
  auto w = [&](double s) {
    const double d = z - s * t;
    return std::exp(-0.5 * s * s - 0.5 * d * d / (sigma * sigma * t));
  };
  const double lo = -60.0, hi = 60.0;  // wide enough for posterior means near 13
  const int n = 200000;
  const double m0 = simpson(w, lo, hi, n);
  const double m1 = simpson([&](double s) { return s * w(s); }, lo, hi, n);
  const double m2 = simpson([&](double s) { return s * s * w(s); }, lo, hi, n);
  const double mean = m1 / m0;
  return {mean, m2 / m0 - mean * mean};
}

TEST(Belief, PosteriorMatchesNumericalIntegration) {
  for (double sigma : {0.5, 1.0, 2.0}) {
    const BeliefKernel k(sigma);
    for (double t : {0.05, 0.5, 2.0}) {
      for (double z : {-3.0, -0.7, 0.0, 1.3, 4.0}) {
        const auto [m, v] = posterior_by_simpson(sigma, t, z);
        EXPECT_NEAR(k.posterior_mean(t, z), m, 1e-10) << sigma << " " << t << " " << z;
        EXPECT_NEAR(k.posterior_variance(t), v, 1e-10);
      }
    }
  }
}

TEST(Belief, ClosedFormsAtSpecialPoints) {
  const BeliefKernel k(2.0);
  EXPECT_DOUBLE_EQ(k.posterior_mean(0.0, 3.0), 3.0 / 4.0);
  EXPECT_DOUBLE_EQ(k.posterior_variance(0.0), 1.0);
  EXPECT_DOUBLE_EQ(k.posterior_variance(4.0), 0.5);
  const auto law = k.posterior(4.0, 8.0);
  EXPECT_DOUBLE_EQ(law.mean, 1.0);
}

TEST(Belief, SignalLawsAtTimeZeroAreDegenerate) {
  const BeliefKernel k(1.0);
  EXPECT_TRUE(k.signal_law_conditional(0.0, 2.0).degenerate());
  EXPECT_TRUE(k.signal_law_marginal(0.0).degenerate());
  EXPECT_DOUBLE_EQ(k.signal_law_marginal(2.0).variance, 2.0 + 4.0);
}

TEST(Belief, MarginalLawMatchesSampling) {
  const double sigma = 0.7, t = 1.5;
  const BeliefKernel k(sigma);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  const int n = 400000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = n01(rng) * t + sigma * std::sqrt(t) * n01(rng);
    s1 += z;
    s2 += z * z;
  }
  const double var = s2 / n - (s1 / n) * (s1 / n);
  const double expected = k.signal_law_marginal(t).variance;
  // Sample variance of a Gaussian has relative std sqrt(2/n).
  EXPECT_NEAR(var, expected, 4.0 * expected * std::sqrt(2.0 / n));
}

TEST(Belief, BayesIdentityHolds) {
  const BeliefKernel k(1.3);
  for (double s = -4.0; s <= 4.0; s += 0.5) {
    for (double z = -4.0; z <= 4.0; z += 0.5) EXPECT_LT(k.bayes_identity_residual(0.8, s, z), 1e-14);
  }
  EXPECT_THROW(k.bayes_identity_residual(0.0, 0.0, 0.0), std::invalid_argument);
}

TEST(Belief, GaussianLawMassAndDensity) {
  const GaussianLaw g{0.4, 2.25};
  const double integral = simpson([&](double x) { return g.density(x); }, -15.0, 15.0, 4000);
  EXPECT_NEAR(integral, 1.0, 1e-12);
  EXPECT_NEAR(g.mass(-1.0, 2.0), g.cdf(2.0) - g.cdf(-1.0), 1e-15);
  const double part = simpson([&](double x) { return g.density(x); }, -1.0, 2.0, 2000);
  EXPECT_NEAR(g.mass(-1.0, 2.0), part, 1e-12);
  // Far tail keeps relative accuracy.
  EXPECT_GT(g.mass(12.0, 13.0), 0.0);
}

TEST(Belief, RejectsInvalidSigma) {
  EXPECT_THROW(BeliefKernel(0.0), std::invalid_argument);
  EXPECT_THROW(BeliefKernel(-1.0), std::invalid_argument);
  EXPECT_THROW(BeliefKernel(std::nan("")), std::invalid_argument);
  EXPECT_THROW(BeliefKernel(1.0).posterior(-1.0, 0.0), std::invalid_argument);
}

}  // namespace
}  // namespace mfgsig
