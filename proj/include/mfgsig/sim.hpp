#pragma once

// Discrete-time N-player game on [t0, T], the horizon of the solver grid.
// Players start from x ~ rho0 and Z_{t0} ~ N(s t0, sigma^2 t0). Every round
// of length Delta each player draws a private signal increment
// N(s Delta, sigma^2 Delta), plays
// a = alpha(t, Z, x) from a control field, pays Delta (C + F) against the
// smoothed empirical position law and moves x += a Delta + N(0, sigma'^2 Delta)
// on the torus; G is paid after the last round.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "mfgsig/costs.hpp"
#include "mfgsig/field.hpp"
#include "mfgsig/flow.hpp"
#include "mfgsig/hjb.hpp"
#include "mfgsig/parallel.hpp"
#include "mfgsig/problem.hpp"

namespace mfgsig {

enum class StateDraw { kFixed, kPrior };

struct SimConfig {
  int N = 1000;
  double delta = 0.005;
  std::uint64_t seed = 1;
  StateDraw draw = StateDraw::kPrior;
  double state = 0.0;  // used when draw == kFixed
  const ControlField* policy = nullptr;
  const ControlField* deviation = nullptr;  // played by the first `deviators` players
  int deviators = 1;
};

struct SimOutcome {
  double state = 0.0;
  std::vector<double> costs;              // per player
  std::vector<PositionDensity> rho;       // smoothed empirical law, rounds + 1 entries
  double mean_cost = 0.0;
  double std_error = 0.0;
  double deviator_cost = 0.0;             // mean over the first `deviators` players
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::seed_seq seq{a, b, c};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace detail

// Two-sided 95% Student-t quantile.
inline double t_quantile_975(int dof) {
  if (dof < 1) throw std::invalid_argument("t_quantile_975: need dof >= 1");
  return boost::math::quantile(boost::math::students_t_distribution<double>(dof), 0.975);
}

namespace detail {

inline int round_count(const Grid& grid, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("sim: delta must be positive");
  const double r = (grid.T() - grid.t0()) / delta;
  const double n = std::round(r);
  if (n < 1.0 || std::abs(r - n) > 1e-9 * std::max(1.0, r)) {
    throw std::invalid_argument("sim: (T - t0) / delta must be an integer round count");
  }
  return static_cast<int>(n);
}

// Sample from the piecewise-constant density on the position cells.
inline double sample_position(const std::vector<double>& cdf, double u) {
  const int Nx = static_cast<int>(cdf.size());
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  const int i = std::min(static_cast<int>(it - cdf.begin()), Nx - 1);
  const double lo = i == 0 ? 0.0 : cdf[i - 1];
  const double width = cdf[i] - lo;
  const double frac = width > 0.0 ? (u - lo) / width : 0.5;
  return (i + std::clamp(frac, 0.0, 1.0)) / Nx;
}

// Wrapped-Gaussian kernel of bandwidth h on Nx cells, weights summing to 1.
inline std::vector<double> smoothing_kernel(int Nx, double h) {
  std::vector<double> k(Nx, 0.0);
  double total = 0.0;
  for (int d = 0; d < Nx; ++d) {
    double acc = 0.0;
    for (int image = -3; image <= 3; ++image) {
      const double off = static_cast<double>(d) / Nx + image;
      acc += std::exp(-0.5 * off * off / (h * h));
    }
    k[d] = acc;
    total += acc;
  }
  for (double& v : k) v /= total;
  return k;
}

}  // namespace detail

// Cloud-in-cell binning of positions onto the cell centres followed by
// wrapped-Gaussian smoothing with bandwidth dx.
inline PositionDensity empirical_density(const std::vector<double>& x, int Nx) {
  std::vector<double> counts(Nx, 0.0);
  for (double xi : x) {
    double p = xi * Nx - 0.5;
    if (p < 0.0) p += Nx;
    const int i0 = std::min(static_cast<int>(p), Nx - 1);
    const double f = p - i0;
    counts[i0] += 1.0 - f;
    counts[(i0 + 1) % Nx] += f;
  }
  const auto kernel = detail::smoothing_kernel(Nx, 1.0 / Nx);
  PositionDensity out{std::vector<double>(Nx, 0.0)};
  const double scale = static_cast<double>(Nx) / static_cast<double>(x.size());
  for (int i = 0; i < Nx; ++i) {
    double acc = 0.0;
    for (int j = 0; j < Nx; ++j) acc += kernel[(i - j + Nx) % Nx] * counts[j];
    out.values[i] = acc * scale;
  }
  return out;
}

inline SimOutcome simulate_population(const MfgProblem& pb, const SimConfig& cfg) {
  const Grid& grid = pb.grid();
  if (cfg.N < 2) throw std::invalid_argument("sim: N must be at least 2");
  if (cfg.policy == nullptr) throw std::invalid_argument("sim: policy is required");
  if (cfg.deviators < 0 || cfg.deviators > cfg.N) {
    throw std::invalid_argument("sim: deviators must lie in [0, N]");
  }
  const int rounds = detail::round_count(grid, cfg.delta);
  const int N = cfg.N, Nx = grid.Nx();
  const double D = cfg.delta;
  const double sz = pb.kernel().sigma() * std::sqrt(D);
  const double sx = pb.sigma_prime() * std::sqrt(D);
  const CostModel& model = pb.model();

  SimOutcome out;
  if (cfg.draw == StateDraw::kFixed) {
    out.state = cfg.state;
  } else {
    std::mt19937_64 rng(detail::mix_seed(cfg.seed, 0xfffffffful, 1));
    out.state = std::normal_distribution<double>()(rng);
  }
  const double s = out.state;

  std::vector<double> cdf(Nx);
  double acc = 0.0;
  for (int i = 0; i < Nx; ++i) {
    acc += pb.rho0()[i] / Nx;
    cdf[i] = acc;
  }
  for (double& c : cdf) c /= acc;

  std::vector<std::mt19937_64> engines;
  engines.reserve(N);
  std::vector<double> x(N), z(N, 0.0);
  out.costs.assign(N, 0.0);
  for (int p = 0; p < N; ++p) {
    engines.emplace_back(detail::mix_seed(cfg.seed, static_cast<std::uint64_t>(p), 2));
    x[p] = detail::sample_position(
        cdf, std::uniform_real_distribution<double>(0.0, 1.0)(engines[p]));
    z[p] = s * grid.t0() +
           pb.kernel().sigma() * std::sqrt(grid.t0()) * std::normal_distribution<double>()(engines[p]);
  }

  std::vector<double> flow(Nx);
  out.rho.reserve(rounds + 1);
  for (int r = 0; r < rounds; ++r) {
    const double t = grid.t0() + r * D;
    out.rho.push_back(empirical_density(x, Nx));
    model.flow_cost(s, out.rho.back(), flow);
    parallel_for(0, N, [&](std::size_t pp) {
      const int p = static_cast<int>(pp);
      const ControlField& policy =
          (cfg.deviation != nullptr && p < cfg.deviators) ? *cfg.deviation : *cfg.policy;
      const double a = interpolate_field(grid, policy.alpha, t, z[p], x[p]);
      out.costs[p] +=
          D * (model.control_cost(s, x[p], a) + detail::interpolate_periodic(flow, x[p]));
      std::normal_distribution<double> normal;
      const double dz = sz * normal(engines[p]);
      const double dx = sx * normal(engines[p]);
      z[p] += s * D + dz;
      x[p] += a * D + dx;
      x[p] -= std::floor(x[p]);
    });
  }
  out.rho.push_back(empirical_density(x, Nx));
  model.terminal_cost(s, out.rho.back(), flow);
  for (int p = 0; p < N; ++p) out.costs[p] += detail::interpolate_periodic(flow, x[p]);

  double s1 = 0.0, s2 = 0.0;
  for (double c : out.costs) {
    s1 += c;
    s2 += c * c;
  }
  out.mean_cost = s1 / N;
  out.std_error = std::sqrt(std::max(0.0, (s2 - N * out.mean_cost * out.mean_cost) / (N - 1.0)) / N);
  if (cfg.deviators > 0) {
    double d = 0.0;
    for (int p = 0; p < cfg.deviators; ++p) d += out.costs[p];
    out.deviator_cost = d / cfg.deviators;
  }
  return out;
}

// Grid-level flow from a round-indexed sequence: linear in time between rounds.
inline std::vector<PositionDensity> rounds_to_levels(const Grid& grid,
                                                     const std::vector<PositionDensity>& rho,
                                                     double delta) {
  std::vector<PositionDensity> out;
  out.reserve(grid.Nt());
  const int last = static_cast<int>(rho.size()) - 1;
  for (int k = 0; k < grid.Nt(); ++k) {
    const double r =
        std::clamp((grid.time(k) - grid.t0()) / delta, 0.0, static_cast<double>(last));
    const int r0 = std::min(static_cast<int>(r), std::max(last - 1, 0));
    const double f = last == 0 ? 0.0 : r - r0;
    PositionDensity d{rho[r0].values};
    if (f > 0.0) {
      for (std::size_t i = 0; i < d.size(); ++i) {
        d.values[i] = (1.0 - f) * rho[r0][i] + f * rho[r0 + 1][i];
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

// Costs of `count` outside players ("ghosts") facing a recorded population
// flow rho[0..rounds] at state s. Ghosts do not enter the flow. The noise of
// ghost g depends only on (seed, g), so two calls with the same seed and
// different policies are paired path by path.
inline std::vector<double> ghost_costs(const MfgProblem& pb, const std::vector<PositionDensity>& rho,
                                       double s, double delta, const ControlField& policy,
                                       int count, std::uint64_t seed) {
  const Grid& grid = pb.grid();
  const int rounds = static_cast<int>(rho.size()) - 1;
  const int Nx = grid.Nx();
  const double sz = pb.kernel().sigma() * std::sqrt(delta);
  const double sx = pb.sigma_prime() * std::sqrt(delta);
  const CostModel& model = pb.model();
  std::vector<std::vector<double>> flow(rounds + 1, std::vector<double>(Nx));
  for (int r = 0; r < rounds; ++r) model.flow_cost(s, rho[r], flow[r]);
  model.terminal_cost(s, rho[rounds], flow[rounds]);

  std::vector<double> cdf(Nx);
  double acc = 0.0;
  for (int i = 0; i < Nx; ++i) {
    acc += pb.rho0()[i] / Nx;
    cdf[i] = acc;
  }
  for (double& c : cdf) c /= acc;

  std::vector<double> out(count, 0.0);
  parallel_for(0, count, [&](std::size_t gg) {
    std::mt19937_64 rng(detail::mix_seed(seed, gg, 6));
    std::normal_distribution<double> normal;
    double x = detail::sample_position(cdf, std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    double z = s * grid.t0() + pb.kernel().sigma() * std::sqrt(grid.t0()) * normal(rng);
    double cost = 0.0;
    for (int r = 0; r < rounds; ++r) {
      const double t = grid.t0() + r * delta;
      const double a = interpolate_field(grid, policy.alpha, t, z, x);
      cost += delta * (model.control_cost(s, x, a) + detail::interpolate_periodic(flow[r], x));
      const double dz = sz * normal(rng);
      const double dx = sx * normal(rng);
      z += s * delta + dz;
      x += a * delta + dx;
      x -= std::floor(x);
    }
    out[gg] = cost + detail::interpolate_periodic(flow[rounds], x);
  });
  return out;
}

// Deviation policy of the epsilon study: the supplied field, or per replica
// the HJB best response to the flows that replica realised under the
// equilibrium policy at every quadrature state.
enum class DeviationMode { kSupplied, kRealizedBestResponse };

struct EpsilonOptions {
  int replicas = 20;
  int ghosts = 1000;   // paired deviator samples per replica and state
  bool paired = true;  // common random numbers between the two policies
  DeviationMode mode = DeviationMode::kSupplied;
  HjbOptions hjb;
};

struct EpsilonEstimate {
  double epsilon = 0.0;      // mean gain of deviating, sum_q w_q (eq - dev)
  double half_width = 0.0;   // 95% Student-t half-width over replicas
  double std_error = 0.0;
  std::vector<double> replica_gains;
  // Largest gain still inside the interval is not positive.
  bool no_profitable_deviation() const { return epsilon - half_width <= 0.0; }
};

// Unilateral deviation gain integrated over the prior with the quadrature
// weights. Each replica simulates the population under the equilibrium
// policy at every quadrature state, then evaluates both policies on paired
// ghost players against the recorded flows.
inline EpsilonEstimate estimate_epsilon(const MfgProblem& pb, const SimConfig& base,
                                        const EpsilonOptions& opt = {}) {
  const bool supplied = opt.mode == DeviationMode::kSupplied;
  if (base.policy == nullptr) throw std::invalid_argument("estimate_epsilon: policy required");
  if (supplied && base.deviation == nullptr) {
    throw std::invalid_argument("estimate_epsilon: deviation policy required");
  }
  if (opt.replicas < 2) throw std::invalid_argument("estimate_epsilon: need at least 2 replicas");
  if (opt.ghosts < 1) throw std::invalid_argument("estimate_epsilon: need at least 1 ghost");
  const auto& quad = pb.quad();
  const std::size_t Q = quad.size();
  EpsilonEstimate out;
  out.replica_gains.assign(opt.replicas, 0.0);
  for (int r = 0; r < opt.replicas; ++r) {
    std::vector<std::vector<PositionDensity>> rounds(Q);
    PositionFlow realized;
    realized.slices.resize(Q);
    for (std::size_t q = 0; q < Q; ++q) {
      SimConfig eq = base;
      eq.draw = StateDraw::kFixed;
      eq.state = quad.nodes[q];
      eq.deviation = nullptr;
      eq.seed = detail::mix_seed(base.seed, 1000003ull * q + r, 4);
      rounds[q] = simulate_population(pb, eq).rho;
      if (!supplied) realized.slices[q] = rounds_to_levels(pb.grid(), rounds[q], base.delta);
    }
    ControlField response;
    if (!supplied) response = extract_control(pb, solve_hjb(pb, realized, opt.hjb));
    const ControlField& deviation = supplied ? *base.deviation : response;
    for (std::size_t q = 0; q < Q; ++q) {
      const std::uint64_t seed = detail::mix_seed(base.seed, 1000003ull * q + r, 7);
      const auto c_eq =
          ghost_costs(pb, rounds[q], quad.nodes[q], base.delta, *base.policy, opt.ghosts, seed);
      const auto c_dev = ghost_costs(pb, rounds[q], quad.nodes[q], base.delta, deviation,
                                     opt.ghosts, opt.paired ? seed : seed + 1);
      double gain = 0.0;
      for (int g = 0; g < opt.ghosts; ++g) gain += c_eq[g] - c_dev[g];
      out.replica_gains[r] += quad.weights[q] * gain / opt.ghosts;
    }
  }
  double s1 = 0.0, s2 = 0.0;
  for (double g : out.replica_gains) {
    s1 += g;
    s2 += g * g;
  }
  const double R = opt.replicas;
  out.epsilon = s1 / R;
  out.std_error = std::sqrt(std::max(0.0, (s2 - R * out.epsilon * out.epsilon) / (R - 1.0)) / R);
  out.half_width = t_quantile_975(opt.replicas - 1) * out.std_error;
  return out;
}

}  // namespace mfgsig
