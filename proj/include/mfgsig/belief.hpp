#pragma once

// Gaussian signal/state inference. The state S ~ N(0,1) is observed through
// the cumulative signal dZ_t = S dt + sigma dB_t; every law involved is
// Gaussian, so all posteriors are available in closed form.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mfgsig {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

struct GaussianLaw {
  double mean = 0.0;
  double variance = 1.0;

  bool degenerate() const { return variance <= 0.0; }

  double log_density(double x) const {
    const double d = x - mean;
    return -0.5 * d * d / variance - 0.5 * std::log(variance) - kLogSqrt2Pi;
  }

  // Computed as exp(log_density) so products of densities can be formed in
  // log-space by callers.
  double density(double x) const { return std::exp(log_density(x)); }

  double cdf(double x) const {
    if (degenerate()) return x < mean ? 0.0 : 1.0;
    return 0.5 * std::erfc(-(x - mean) / std::sqrt(2.0 * variance));
  }

  // Probability of [a, b).
  double mass(double a, double b) const {
    if (degenerate()) return (mean >= a && mean < b) ? 1.0 : 0.0;
    const double scale = std::sqrt(2.0 * variance);
    const double ua = (a - mean) / scale;
    const double ub = (b - mean) / scale;
    // Use the tail on the side away from the mean to keep relative accuracy.
    if (ua > 0.0) return 0.5 * (std::erfc(ua) - std::erfc(ub));
    if (ub < 0.0) return 0.5 * (std::erfc(-ub) - std::erfc(-ua));
    return 0.5 * (std::erf(ub) - std::erf(ua));
  }
};

class BeliefKernel {
 public:
  explicit BeliefKernel(double sigma) : sigma_(sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw std::invalid_argument("BeliefKernel: sigma must be positive, got " +
                                  std::to_string(sigma));
    }
  }

  double sigma() const { return sigma_; }
  double sigma2() const { return sigma_ * sigma_; }

  // Posterior mean slope: r_t(z) = z / (t + sigma^2).
  double posterior_mean(double t, double z) const { return z / (t + sigma2()); }
  double posterior_variance(double t) const { return sigma2() / (sigma2() + t); }

  GaussianLaw posterior(double t, double z) const {
    if (t < 0.0) throw std::invalid_argument("posterior: t must be >= 0");
    return {posterior_mean(t, z), posterior_variance(t)};
  }

  // Law of Z_t given S = s. Degenerate (point mass at 0) at t = 0.
  GaussianLaw signal_law_conditional(double t, double s) const {
    if (t <= 0.0) return {0.0, 0.0};
    return {s * t, sigma2() * t};
  }

  GaussianLaw signal_law_marginal(double t) const {
    if (t <= 0.0) return {0.0, 0.0};
    return {0.0, sigma2() * t + t * t};
  }

  // |phi_{0,1}(s) phi_{st,sigma^2 t}(z) - phi_{0,sigma^2 t+t^2}(z) phi_{r_t(z),sigma_t^2}(s)|,
  // with both products formed in log-space.
  double bayes_identity_residual(double t, double s, double z) const {
    if (!(t > 0.0)) throw std::invalid_argument("bayes_identity_residual: t must be > 0");
    const GaussianLaw prior{0.0, 1.0};
    const double lhs = prior.log_density(s) + signal_law_conditional(t, s).log_density(z);
    const double rhs = signal_law_marginal(t).log_density(z) + posterior(t, z).log_density(s);
    return std::abs(std::exp(lhs) - std::exp(rhs));
  }

 private:
  double sigma_;
};

}  // namespace mfgsig
