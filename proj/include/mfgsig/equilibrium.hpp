#pragma once

// Fixed-point map Psi: flow -> (HJB) -> control -> (tau) -> marginal flow, its
// damped iteration, and the diagnostics around it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mfgsig/flow.hpp"
#include "mfgsig/fp.hpp"
#include "mfgsig/hjb.hpp"
#include "mfgsig/problem.hpp"

namespace mfgsig {

// Wasserstein-1 distance on the unit circle between two cell densities:
// min over c of sum_i |D_i - c| dx, D the CDF difference, c its median.
inline double torus_w1(const PositionDensity& a, const PositionDensity& b) {
  const std::size_t n = a.size();
  if (b.size() != n) throw std::invalid_argument("torus_w1: size mismatch");
  const double dx = 1.0 / static_cast<double>(n);
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += (a[i] - b[i]) * dx;
    cdf[i] = acc;
  }
  std::vector<double> sorted = cdf;
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  const double c = sorted[n / 2];
  double w = 0.0;
  for (double d : cdf) w += std::abs(d - c);
  return w * dx;
}

// Uniform (max over nodes and levels) W1 distance between two flows.
inline double flow_metric(const PositionFlow& a, const PositionFlow& b) {
  if (a.states() != b.states() || a.levels() != b.levels()) {
    throw std::invalid_argument("flow_metric: flows have different shapes");
  }
  double worst = 0.0;
  for (std::size_t q = 0; q < a.states(); ++q) {
    for (std::size_t k = 0; k < a.levels(); ++k) {
      worst = std::max(worst, torus_w1(a.at(q, k), b.at(q, k)));
    }
  }
  return worst;
}

struct PsiOutput {
  PositionFlow flow;
  ValueField value;
  ControlField control;
  FactorDensity tau;
  double max_renormalization_deviation = 0.0;
};

inline PsiOutput psi(const MfgProblem& pb, const PositionFlow& mu, const HjbOptions& hjb = {}) {
  const Grid& grid = pb.grid();
  ValueField value = solve_hjb(pb, mu, hjb);
  ControlField control = extract_control(pb, value);
  FactorDensity tau = solve_tau(pb, control);
  PsiOutput out{PositionFlow{}, std::move(value), std::move(control), std::move(tau)};
  out.flow.slices.assign(pb.quad().size(), std::vector<PositionDensity>(grid.Nt()));
  for (std::size_t q = 0; q < pb.quad().size(); ++q) {
    for (int k = 0; k < grid.Nt(); ++k) {
      auto marg = position_marginal(pb, out.tau, pb.quad().nodes[q], k);
      out.max_renormalization_deviation =
          std::max(out.max_renormalization_deviation, std::abs(marg.renormalization - 1.0));
      out.flow.slices[q][k] = std::move(marg.rho);
    }
  }
  return out;
}

enum class Damping { kFixed, kFictitiousPlay };

struct EquilibriumOptions {
  Damping damping = Damping::kFixed;
  double delta = 0.5;
  double tol = 1e-4;
  int k_max = 200;
  HjbOptions hjb;
};

struct EquilibriumResult {
  ValueField value;
  ControlField control;
  FactorDensity tau;
  PositionFlow flow;            // mu*, the last iterate
  std::vector<double> residuals;  // metric(Psi(mu_k), mu_k)
  int iterations = 0;             // damped updates applied
  bool converged = false;
  double final_residual = 0.0;
  double max_renormalization_deviation = 0.0;
};

inline double damping_weight(const EquilibriumOptions& opt, int k) {
  if (k == 0) return 1.0;
  return opt.damping == Damping::kFictitiousPlay ? 1.0 / (k + 1.0) : opt.delta;
}

// Damped Picard iteration mu_{k+1} = (1 - d_k) mu_k + d_k Psi(mu_k); stops
// once metric(Psi(mu_k), mu_k) < tol. The first update is a full step.
inline EquilibriumResult solve_equilibrium(
    const MfgProblem& pb, const PositionFlow& initial, const EquilibriumOptions& opt,
    const std::function<void(int, double)>& on_iteration = nullptr) {
  EquilibriumResult res;
  PositionFlow mu = initial;
  for (int k = 0;; ++k) {
    PsiOutput out;
    try {
      out = psi(pb, mu, opt.hjb);
    } catch (const std::exception& e) {
      throw SolverError("iteration " + std::to_string(k) + ": " + e.what());
    }
    const double r = flow_metric(out.flow, mu);
    res.residuals.push_back(r);
    res.max_renormalization_deviation =
        std::max(res.max_renormalization_deviation, out.max_renormalization_deviation);
    if (on_iteration) on_iteration(k, r);
    if (r < opt.tol || k >= opt.k_max) {
      res.converged = r < opt.tol;
      res.final_residual = r;
      res.value = std::move(out.value);
      res.control = std::move(out.control);
      res.tau = std::move(out.tau);
      res.flow = std::move(mu);
      return res;
    }
    mu = mu.blend(out.flow, damping_weight(opt, k));
    ++res.iterations;
  }
}

inline EquilibriumResult solve_equilibrium(const MfgProblem& pb, const EquilibriumOptions& opt) {
  return solve_equilibrium(pb, PositionFlow::constant(pb.quad().size(), pb.grid().Nt(), pb.rho0()),
                           opt);
}

struct HolderReport {
  double time_constant = 0.0;   // max W1(mu(s,t_{k+1}), mu(s,t_k)) / |dt|^{1/2}
  double state_constant = 0.0;  // max W1(mu(s_{q+1},t), mu(s_q,t)) / |ds|^{1/2}
};

inline HolderReport holder_diagnostics(const MfgProblem& pb, const PositionFlow& mu) {
  HolderReport rep;
  const Grid& grid = pb.grid();
  const auto& nodes = pb.quad().nodes;
  for (std::size_t q = 0; q < mu.states(); ++q) {
    for (std::size_t k = 0; k + 1 < mu.levels(); ++k) {
      const double gap = grid.time(static_cast<int>(k) + 1) - grid.time(static_cast<int>(k));
      rep.time_constant =
          std::max(rep.time_constant, torus_w1(mu.at(q, k + 1), mu.at(q, k)) / std::sqrt(gap));
    }
  }
  for (std::size_t q = 0; q + 1 < mu.states(); ++q) {
    const double gap = std::abs(nodes[q + 1] - nodes[q]);
    for (std::size_t k = 0; k < mu.levels(); ++k) {
      rep.state_constant =
          std::max(rep.state_constant, torus_w1(mu.at(q + 1, k), mu.at(q, k)) / std::sqrt(gap));
    }
  }
  return rep;
}

// Seeded generator of density pairs: wrapped bumps, two-bump mixtures and
// cosine perturbations of the uniform density.
inline std::vector<std::pair<PositionDensity, PositionDensity>> density_pairs(int Nx, int count,
                                                                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](int kind) {
    switch (kind) {
      case 0:
        return PositionDensity::bump(Nx, unit(rng), 0.03 + 0.2 * unit(rng));
      case 1: {
        auto a = PositionDensity::bump(Nx, unit(rng), 0.03 + 0.2 * unit(rng));
        const auto b = PositionDensity::bump(Nx, unit(rng), 0.03 + 0.2 * unit(rng));
        const double w = unit(rng);
        for (int i = 0; i < Nx; ++i) a[i] = w * a[i] + (1.0 - w) * b[i];
        return a;
      }
      default: {
        PositionDensity r = PositionDensity::uniform(Nx);
        const int mode = 1 + static_cast<int>(4 * unit(rng));
        const double amp = 0.9 * unit(rng);
        const double phase = 2.0 * std::numbers::pi * unit(rng);
        for (int i = 0; i < Nx; ++i) {
          r[i] = 1.0 + amp * std::cos(2.0 * std::numbers::pi * mode * (i + 0.5) / Nx + phase);
        }
        r.normalize();
        return r;
      }
    }
  };
  std::vector<std::pair<PositionDensity, PositionDensity>> pairs;
  pairs.reserve(count);
  for (int n = 0; n < count; ++n) {
    const int k1 = static_cast<int>(3 * unit(rng));
    const int k2 = static_cast<int>(3 * unit(rng));
    auto a = draw(k1);
    auto b = draw(k2);
    pairs.emplace_back(std::move(a), std::move(b));
  }
  return pairs;
}

struct MonotonicityReport {
  double min_flow = 0.0;      // min over (s, pair) of int (rho1 - rho2)(F1 - F2) dx
  double min_terminal = 0.0;  // same for G
  int evaluations = 0;
  bool monotone = false;      // both minima >= -1e-10
};

inline MonotonicityReport monotonicity_check(
    const CostModel& model, const std::vector<std::pair<PositionDensity, PositionDensity>>& pairs,
    const std::vector<double>& states) {
  MonotonicityReport rep;
  rep.min_flow = std::numeric_limits<double>::infinity();
  rep.min_terminal = std::numeric_limits<double>::infinity();
  for (double s : states) {
    for (const auto& [r1, r2] : pairs) {
      const std::size_t n = r1.size();
      std::vector<double> f1(n), f2(n), g1(n), g2(n);
      model.flow_cost(s, r1, f1);
      model.flow_cost(s, r2, f2);
      model.terminal_cost(s, r1, g1);
      model.terminal_cost(s, r2, g2);
      double fi = 0.0, gi = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        fi += (r1[i] - r2[i]) * (f1[i] - f2[i]);
        gi += (r1[i] - r2[i]) * (g1[i] - g2[i]);
      }
      rep.min_flow = std::min(rep.min_flow, fi / n);
      rep.min_terminal = std::min(rep.min_terminal, gi / n);
      ++rep.evaluations;
    }
  }
  rep.monotone = rep.min_flow >= -1e-10 && rep.min_terminal >= -1e-10;
  return rep;
}

struct UniquenessReport {
  EquilibriumResult first;
  EquilibriumResult second;
  double flow_distance = 0.0;   // flow_metric between the two limits
  double value_distance = 0.0;  // L-infinity between the two value fields
};

// Runs the damped iteration from two initial flows and compares the limits.
inline UniquenessReport uniqueness_experiment(const MfgProblem& pb, const PositionFlow& a,
                                              const PositionFlow& b,
                                              const EquilibriumOptions& opt) {
  UniquenessReport rep;
  rep.first = solve_equilibrium(pb, a, opt);
  rep.second = solve_equilibrium(pb, b, opt);
  rep.flow_distance = flow_metric(rep.first.flow, rep.second.flow);
  const auto& u1 = rep.first.value.u.data();
  const auto& u2 = rep.second.value.u.data();
  for (std::size_t n = 0; n < u1.size(); ++n) {
    rep.value_distance = std::max(rep.value_distance, std::abs(u1[n] - u2[n]));
  }
  return rep;
}

}  // namespace mfgsig
