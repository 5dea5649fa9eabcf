#pragma once

// Backward solver for
//   -u_t + H(t,z,x,u_x) - r_t(z) u_z - (sigma^2/2) u_zz - (sigma'^2/2) u_xx = F~
//   u(T,z,x) = G~(z,x)
// on the (signal, torus) grid.
//
// Each step freezes the control at the previous slice, which turns -H into
// the linear term a u_x + C~(a); the step is then solved implicitly (x lines,
// then z lines) with the fitted stencils of tridiagonal.hpp, the control is
// relabelled from the new slice and the step is solved again. Every implicit
// line operator is an M-matrix, so each step is monotone for any time step.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfgsig/costs.hpp"
#include "mfgsig/field.hpp"
#include "mfgsig/flow.hpp"
#include "mfgsig/parallel.hpp"
#include "mfgsig/problem.hpp"
#include "mfgsig/tridiagonal.hpp"

namespace mfgsig {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ValueField {
  Grid grid;
  Field3 u;
};

struct ControlField {
  Grid grid;
  Field3 alpha;
};

// F~ on every grid node for a flow mu[q][k].
inline Field3 expected_flow_field(const MfgProblem& pb, const PositionFlow& flow) {
  const Grid& grid = pb.grid();
  const auto& quad = pb.quad();
  if (flow.states() != quad.size() || flow.levels() != static_cast<std::size_t>(grid.Nt())) {
    throw std::invalid_argument("expected_flow_field: flow shape does not match grid/quadrature");
  }
  Field3 out(grid);
  parallel_for(0, grid.Nt(), [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    const auto table = state_cost_table(pb.model(), quad, flow.level(k), false);
    for (int j = 0; j < grid.Nz(); ++j) {
      const auto w = pb.posterior().at(k, j);
      auto row = out.row(k, j);
      for (int i = 0; i < grid.Nx(); ++i) {
        double acc = 0.0;
        for (std::size_t q = 0; q < quad.size(); ++q) acc += w[q] * table[q][i];
        row[i] = acc;
      }
    }
  });
  return out;
}

// G~ at the terminal level, [j][i] row-major.
inline Slice expected_terminal_slice(const MfgProblem& pb,
                                     std::span<const PositionDensity> rho_at_T) {
  const Grid& grid = pb.grid();
  const auto& quad = pb.quad();
  const auto table = state_cost_table(pb.model(), quad, rho_at_T, true);
  Slice out(grid.slice_size());
  const int K = grid.Nt() - 1;
  for (int j = 0; j < grid.Nz(); ++j) {
    const auto w = pb.posterior().at(K, j);
    for (int i = 0; i < grid.Nx(); ++i) {
      double acc = 0.0;
      for (std::size_t q = 0; q < quad.size(); ++q) acc += w[q] * table[q][i];
      out[static_cast<std::size_t>(j) * grid.Nx() + i] = acc;
    }
  }
  return out;
}

struct HjbOptions {
  int relabel_passes = 1;
};

namespace detail {

inline double centered_dx(std::span<const double> row, int i, double dx) {
  const int n = static_cast<int>(row.size());
  return (row[(i + 1) % n] - row[(i + n - 1) % n]) / (2.0 * dx);
}

// Optimal control and its expected control cost at every node of a slice.
inline void relabel_slice(const MfgProblem& pb, std::span<const double> u, int k,
                          std::span<double> alpha, std::span<double> control_cost) {
  const Grid& grid = pb.grid();
  const int Nx = grid.Nx();
  const double t = grid.time(k);
  parallel_for(0, grid.Nz(), [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    const auto w = pb.posterior().at(k, j);
    const auto row = u.subspan(static_cast<std::size_t>(j) * Nx, Nx);
    for (int i = 0; i < Nx; ++i) {
      const std::size_t n = static_cast<std::size_t>(j) * Nx + i;
      ExpectedControlCost cost(pb.model(), pb.quad(), w, grid.x(i));
      const double p = centered_dx(row, i, grid.dx());
      const auto hv = maximize_hamiltonian(cost, p, t, grid.z(j), grid.x(i), alpha[n]);
      alpha[n] = hv.control;
      control_cost[n] = cost.value(hv.control);
    }
  });
}

// Backward-Kolmogorov step with frozen control:
// (I - dt Lz)(I - dt Lx) u_k = u_{k+1} + dt (F~ + C~(alpha)).
inline void backward_linear_step(const MfgProblem& pb, double t_mid, std::span<const double> next,
                                 std::span<const double> source, std::span<const double> alpha,
                                 std::span<const double> control_cost, std::span<double> out) {
  const Grid& grid = pb.grid();
  const int Nx = grid.Nx(), Nz = grid.Nz();
  const double dt = grid.dt();
  const double Dx = 0.5 * pb.sigma_prime() * pb.sigma_prime();
  const double Dz = 0.5 * pb.kernel().sigma2();
  parallel_for(0, Nz, [&](std::size_t jj) {
    const std::size_t base = jj * Nx;
    LineStencil st = LineStencil::periodic_line(Nx);
    for (int i = 0; i < Nx; ++i) {
      const double v = 0.5 * (alpha[base + i] + alpha[base + (i + 1) % Nx]);
      st.set_face(i, v, Dx, grid.dx());
    }
    auto row = out.subspan(base, Nx);
    for (int i = 0; i < Nx; ++i) {
      row[i] = next[base + i] + dt * (source[base + i] + control_cost[base + i]);
    }
    LineWorkspace ws;
    implicit_advective_step(st, dt, row, ws);
  });
  LineStencil stz = LineStencil::neumann(Nz);
  for (int f = 1; f < Nz; ++f) {
    stz.set_face(f, pb.kernel().posterior_mean(t_mid, grid.z_face(f)), Dz, grid.dz());
  }
  parallel_for(0, Nx, [&](std::size_t i) {
    std::vector<double> col(Nz);
    for (int j = 0; j < Nz; ++j) col[j] = out[static_cast<std::size_t>(j) * Nx + i];
    LineWorkspace ws;
    implicit_advective_step(stz, dt, col, ws);
    for (int j = 0; j < Nz; ++j) out[static_cast<std::size_t>(j) * Nx + i] = col[j];
  });
}

inline void check_finite(std::span<const double> slice, int k) {
  for (double v : slice) {
    if (!std::isfinite(v)) {
      throw SolverError("solve_hjb: non-finite value in time slice " + std::to_string(k));
    }
  }
}

}  // namespace detail

// Backward sweep with an explicit source field F~[k][j][i] and terminal slice.
inline ValueField solve_hjb(const MfgProblem& pb, const Field3& source, const Slice& terminal,
                            const HjbOptions& options = {}) {
  const Grid& grid = pb.grid();
  const int Nt = grid.Nt();
  if (source.nt() != Nt || source.nz() != grid.Nz() || source.nx() != grid.Nx()) {
    throw std::invalid_argument("solve_hjb: source field shape does not match grid");
  }
  if (terminal.size() != grid.slice_size()) {
    throw std::invalid_argument("solve_hjb: terminal slice shape does not match grid");
  }
  ValueField out{grid, Field3(grid)};
  auto last = out.u.slice(Nt - 1);
  std::copy(terminal.begin(), terminal.end(), last.begin());
  detail::check_finite(last, Nt - 1);

  const std::size_t n = grid.slice_size();
  std::vector<double> alpha(n, 0.0), control_cost(n, 0.0);
  for (int k = Nt - 2; k >= 0; --k) {
    const auto next = out.u.slice(k + 1);
    auto cur = out.u.slice(k);
    const double t_mid = 0.5 * (grid.time(k) + grid.time(k + 1));
    detail::relabel_slice(pb, next, k, alpha, control_cost);
    for (int pass = 0; pass <= options.relabel_passes; ++pass) {
      if (pass > 0) detail::relabel_slice(pb, cur, k, alpha, control_cost);
      detail::backward_linear_step(pb, t_mid, next, source.slice(k), alpha, control_cost, cur);
    }
    detail::check_finite(cur, k);
  }
  return out;
}

// Backward sweep against a candidate flow: F~ and G~ from the cost model.
inline ValueField solve_hjb(const MfgProblem& pb, const PositionFlow& flow,
                            const HjbOptions& options = {}) {
  const Field3 source = expected_flow_field(pb, flow);
  const Slice terminal = expected_terminal_slice(pb, flow.level(pb.grid().Nt() - 1));
  return solve_hjb(pb, source, terminal, options);
}

// alpha = -D_p H(t, z, x, D_x u) with centred D_x u.
inline ControlField extract_control(const MfgProblem& pb, const ValueField& value) {
  if (!value.u.all_finite()) throw SolverError("extract_control: value field is not finite");
  const Grid& grid = pb.grid();
  ControlField out{grid, Field3(grid)};
  std::vector<double> cost(grid.slice_size());
  for (int k = 0; k < grid.Nt(); ++k) {
    detail::relabel_slice(pb, value.u.slice(k), k, out.alpha.slice(k), cost);
  }
  return out;
}

struct PolicyCheckOptions {
  double x0 = 0.5;
  int n_paths = 100000;
  std::uint64_t seed = 1;
  int substeps = 1;             // Euler steps per grid step
  double allowance = 0.0;       // declared discretisation allowance
  int block = 1024;             // paths per independently seeded block
};

struct PolicyCheck {
  double estimate = 0.0;
  double std_error = 0.0;
  double reference = 0.0;  // u(t0, 0, x0)
  double allowance = 0.0;
  long exploded = 0;       // paths with |Z| > 2 Zmax at some step
  bool passed() const {
    return std::abs(estimate - reference) <= 3.0 * std_error + allowance;
  }
};

// Monte Carlo value of the control field for the reduced single-player
// problem started at (t0, 0, x0): dZ = r_t(Z) dt + sigma dB,
// dX = a dt + sigma' dW on the torus, cost int (C~ + F~) dt + G~(Z_T, X_T).
// Blocks of paths use their own seeded engines and are summed in block
// order, so the result does not depend on the worker count.
inline PolicyCheck policy_value_check(const MfgProblem& pb, const ValueField& value,
                                      const ControlField& control, const PositionFlow& flow,
                                      const PolicyCheckOptions& opt = {}) {
  const Grid& grid = pb.grid();
  if (opt.n_paths < 2 || opt.substeps < 1 || opt.block < 1) {
    throw std::invalid_argument("policy_value_check: need n_paths >= 2, substeps >= 1, block >= 1");
  }
  const Field3 source = expected_flow_field(pb, flow);
  const Slice terminal = expected_terminal_slice(pb, flow.level(grid.Nt() - 1));
  const auto& quad = pb.quad();
  const double h = grid.dt() / opt.substeps;
  const int steps = (grid.Nt() - 1) * opt.substeps;
  const double sz = pb.kernel().sigma() * std::sqrt(h);
  const double sx = pb.sigma_prime() * std::sqrt(h);
  const int blocks = (opt.n_paths + opt.block - 1) / opt.block;
  std::vector<double> sum(blocks, 0.0), sum2(blocks, 0.0);
  std::vector<long> exploded(blocks, 0);
  parallel_for(0, blocks, [&](std::size_t b) {
    std::seed_seq seq{static_cast<std::uint64_t>(opt.seed), static_cast<std::uint64_t>(b)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    std::vector<double> w(quad.size());
    const int first = static_cast<int>(b) * opt.block;
    const int last = std::min(opt.n_paths, first + opt.block);
    for (int p = first; p < last; ++p) {
      double z = 0.0, x = opt.x0, cost = 0.0;
      bool blew = false;
      for (int n = 0; n < steps; ++n) {
        const double t = grid.t0() + n * h;
        const double a = interpolate_field(grid, control.alpha, t, z, x);
        posterior_weights_into(quad, pb.kernel(), t, z, w);
        double c = 0.0;
        for (std::size_t q = 0; q < quad.size(); ++q) {
          c += w[q] * pb.model().control_cost(quad.nodes[q], x, a);
        }
        cost += h * (c + interpolate_field(grid, source, t, z, x));
        const double dz = sz * normal(rng);
        const double dx = sx * normal(rng);
        z += pb.kernel().posterior_mean(t, z) * h + dz;
        x += a * h + dx;
        x -= std::floor(x);
        if (std::abs(z) > 2.0 * grid.Zmax()) blew = true;
      }
      cost += interpolate_slice(grid, terminal, z, x);
      sum[b] += cost;
      sum2[b] += cost * cost;
      if (blew) ++exploded[b];
    }
  });
  PolicyCheck out;
  double s1 = 0.0, s2 = 0.0;
  for (int b = 0; b < blocks; ++b) {
    s1 += sum[b];
    s2 += sum2[b];
    out.exploded += exploded[b];
  }
  const double n = opt.n_paths;
  out.estimate = s1 / n;
  const double var = std::max(0.0, (s2 - n * out.estimate * out.estimate) / (n - 1.0));
  out.std_error = std::sqrt(var / n);
  out.reference = interpolate_slice(grid, value.u.slice(0), 0.0, opt.x0);
  out.allowance = opt.allowance;
  return out;
}

}  // namespace mfgsig
