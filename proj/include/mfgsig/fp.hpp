#pragma once

// Forward Fokker-Planck solvers. For a fixed state s the density of (Z, X)
// solves
//   m_t + (a m)_x + s m_z - (sigma^2/2) m_zz - (sigma'^2/2) m_xx = 0,
// and factorises as m = phi_{st, sigma^2 t}(z) tau(t,z,x) with tau solving
//   tau_t + (a tau)_x + (z/t) tau_z - (sigma^2/2) tau_zz - (sigma'^2/2) tau_xx = 0.
// Both start at t0 from the exact law at that time: m(t0) = rho0 x phi and
// tau(t0) = rho0.
//
// Steps are Lie-split (z lines, then x lines), each implicit with the fitted
// stencils of tridiagonal.hpp: flux form for m and the x transport of tau,
// advective form for the tau signal drift.

#include <algorithm>
#include <cmath>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfgsig/field.hpp"
#include "mfgsig/hjb.hpp"
#include "mfgsig/parallel.hpp"
#include "mfgsig/problem.hpp"
#include "mfgsig/tridiagonal.hpp"

namespace mfgsig {

// Signal-axis transport: co-moving frame zeta = z - s t (exact shift, m only),
// limited explicit upwind, or the linear implicit fitted stencil, whose exact
// transpose is solve_adjoint_linear.
enum class SignalTransport { kComovingFrame, kLimitedExplicit, kFittedImplicit };

struct FpLimits {
  double max_run_mass_drift = 1e-6;
  double clip_budget = 1e-12;
  double max_courant = 0.5;
  SignalTransport transport = SignalTransport::kComovingFrame;
  SignalTransport tau_transport = SignalTransport::kFittedImplicit;
};

struct StateDensity {
  double state = 0.0;
  Field3 m;
  double max_step_mass_drift = 0.0;
  double run_mass_drift = 0.0;
  double clipped_mass = 0.0;
};

struct DensityFamily {
  std::vector<StateDensity> members;  // one per quadrature node
};

struct FactorDensity {
  Field3 tau;
  double max_x_mass_error = 0.0;  // max over (t, z) of |sum_x tau dx - 1|
  double clipped_mass = 0.0;
};

namespace detail {

inline double slice_mass(std::span<const double> v, double cell) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc * cell;
}

// Clips negative values to zero and returns the clipped (positive) mass.
inline double clip_negative(std::span<double> v, double cell) {
  double clipped = 0.0;
  for (double& x : v) {
    if (x < 0.0) {
      clipped -= x;
      x = 0.0;
    }
  }
  return clipped * cell;
}

// Conservative implicit x step on every signal row: (I - dt Lx^T) m = m_old.
inline void forward_x_step(const Grid& grid, double Dx, std::span<const double> alpha,
                           std::span<double> slice) {
  const int Nx = grid.Nx();
  parallel_for(0, grid.Nz(), [&](std::size_t jj) {
    const std::size_t base = jj * Nx;
    LineStencil st = LineStencil::periodic_line(Nx);
    for (int i = 0; i < Nx; ++i) {
      st.set_face(i, 0.5 * (alpha[base + i] + alpha[base + (i + 1) % Nx]), Dx, grid.dx());
    }
    LineWorkspace ws;
    implicit_conservative_step(st, grid.dt(), slice.subspan(base, Nx), ws);
  });
}

// Implicit z step on every position column with a shared stencil.
inline void z_step(const Grid& grid, const LineStencil& st, bool conservative,
                   std::span<double> slice) {
  const int Nx = grid.Nx(), Nz = grid.Nz();
  parallel_for(0, Nx, [&](std::size_t i) {
    std::vector<double> col(Nz);
    for (int j = 0; j < Nz; ++j) col[j] = slice[static_cast<std::size_t>(j) * Nx + i];
    LineWorkspace ws;
    if (conservative) {
      implicit_conservative_step(st, grid.dt(), col, ws);
    } else {
      implicit_advective_step(st, grid.dt(), col, ws);
    }
    for (int j = 0; j < Nz; ++j) slice[static_cast<std::size_t>(j) * Nx + i] = col[j];
  });
}

inline double van_leer(double r) { return (r + std::abs(r)) / (1.0 + std::abs(r)); }

// Limited upwind slope ratio of the upwind cell; zero at a flat denominator.
inline double limited_slope(double up2, double up1, double down) {
  const double den = up1 - up2;
  if (std::abs(den) < 1e-300) return 0.0;
  return van_leer((down - up1) / den) * den;
}

// Explicit conservative step of m_t + v m_z = 0 on one column with closed
// end faces; nu = v dt / dz, |nu| <= 1/2 keeps it positive.
inline void limited_flux_step(std::span<double> col, double nu, std::vector<double>& flux) {
  const int n = static_cast<int>(col.size());
  flux.assign(n + 1, 0.0);
  for (int f = 1; f < n; ++f) {
    if (nu >= 0.0) {
      const int up = f - 1;
      const double slope = up >= 1 ? limited_slope(col[up - 1], col[up], col[up + 1]) : 0.0;
      flux[f] = nu * (col[up] + 0.5 * (1.0 - std::abs(nu)) * slope);
    } else {
      const int up = f;
      const double slope = up + 1 < n ? limited_slope(col[up + 1], col[up], col[up - 1]) : 0.0;
      flux[f] = nu * (col[up] + 0.5 * (1.0 - std::abs(nu)) * slope);
    }
  }
  for (int j = 0; j < n; ++j) col[j] -= flux[j + 1] - flux[j];
}

// Explicit advective step of tau_t + v(z) tau_z = 0 in incremental form;
// outflow ends need no boundary data. |v| dt / dz <= 1/2 keeps the maximum
// principle.
inline void limited_advective_step(std::span<double> col, std::span<const double> nu,
                                   std::vector<double>& next) {
  const int n = static_cast<int>(col.size());
  next.assign(col.begin(), col.end());
  auto at = [&](int j) { return col[std::clamp(j, 0, n - 1)]; };
  // Reconstructed upwind value at face j+1/2 seen from cell j moving right.
  auto right_value = [&](int j) { return at(j) + 0.5 * limited_slope(at(j - 1), at(j), at(j + 1)); };
  auto left_value = [&](int j) { return at(j) + 0.5 * limited_slope(at(j + 1), at(j), at(j - 1)); };
  for (int j = 0; j < n; ++j) {
    if (nu[j] > 0.0) {
      next[j] = col[j] - nu[j] * (right_value(j) - right_value(j - 1));
    } else if (nu[j] < 0.0) {
      next[j] = col[j] + nu[j] * (left_value(j) - left_value(j + 1));
    }
  }
  std::copy(next.begin(), next.end(), col.begin());
}

// Cell averages of w shifted by d cells towards +z: out_j = w(z_j - d dz),
// exact for the piecewise-constant reconstruction. Mass leaving the box is
// dropped.
inline void shift_columns(const Grid& grid, std::span<const double> w, double d,
                          std::span<double> out) {
  const int Nx = grid.Nx(), Nz = grid.Nz();
  const double fl = std::floor(d);
  const int n = static_cast<int>(fl);
  const double f = d - fl;
  auto at = [&](int j, int i) {
    return j >= 0 && j < Nz ? w[static_cast<std::size_t>(j) * Nx + i] : 0.0;
  };
  for (int j = 0; j < Nz; ++j) {
    for (int i = 0; i < Nx; ++i) {
      out[static_cast<std::size_t>(j) * Nx + i] = (1.0 - f) * at(j - n, i) + f * at(j - n - 1, i);
    }
  }
}

// Control slice seen from the co-moving frame: alpha(z_j + d dz, x), linear
// in z and clamped at the box ends.
inline Slice shifted_control(const Grid& grid, std::span<const double> alpha, double d) {
  const int Nx = grid.Nx(), Nz = grid.Nz();
  Slice out(alpha.size());
  for (int j = 0; j < Nz; ++j) {
    const double pos = std::clamp(j + d, 0.0, static_cast<double>(Nz - 1));
    const int lo = std::min(static_cast<int>(pos), Nz - 2);
    const double f = pos - lo;
    for (int i = 0; i < Nx; ++i) {
      out[static_cast<std::size_t>(j) * Nx + i] =
          (1.0 - f) * alpha[static_cast<std::size_t>(lo) * Nx + i] +
          f * alpha[static_cast<std::size_t>(lo + 1) * Nx + i];
    }
  }
  return out;
}

inline LineStencil constant_drift_z(const Grid& grid, double v, double D) {
  LineStencil st = LineStencil::neumann(grid.Nz());
  for (int f = 1; f < grid.Nz(); ++f) st.set_face(f, v, D, grid.dz());
  return st;
}

inline void check_control(const Grid& grid, const ControlField& control) {
  if (control.alpha.nt() != grid.Nt() || control.alpha.nz() != grid.Nz() ||
      control.alpha.nx() != grid.Nx()) {
    throw std::invalid_argument("control field shape does not match grid");
  }
}

}  // namespace detail

namespace detail {

// Density carried in the frame zeta = z - s t, where the signal drift
// vanishes; each level is shifted back onto the z cells for storage.
inline StateDensity solve_fp_comoving(const MfgProblem& pb, const ControlField& control, double s,
                                      const FpLimits& limits) {
  const Grid& grid = pb.grid();
  const int Nx = grid.Nx(), Nz = grid.Nz();
  const double cell = grid.dx() * grid.dz();
  StateDensity out{s, Field3(grid)};
  const auto phi = signal_cell_density(grid, pb.kernel().signal_law_conditional(grid.t0(), 0.0));
  Slice w(grid.slice_size());
  for (int j = 0; j < Nz; ++j) {
    for (int i = 0; i < Nx; ++i) w[static_cast<std::size_t>(j) * Nx + i] = phi[j] * pb.rho0()[i];
  }
  auto shift = [&](int k) { return s * grid.time(k) / grid.dz(); };
  shift_columns(grid, w, shift(0), out.m.slice(0));
  const double Dx = 0.5 * pb.sigma_prime() * pb.sigma_prime();
  const LineStencil stz = constant_drift_z(grid, 0.0, 0.5 * pb.kernel().sigma2());
  const double initial_mass = slice_mass(w, cell);
  for (int k = 0; k + 1 < grid.Nt(); ++k) {
    const double before = slice_mass(w, cell);
    z_step(grid, stz, true, w);
    const Slice alpha = shifted_control(grid, control.alpha.slice(k), shift(k));
    forward_x_step(grid, Dx, alpha, w);
    out.clipped_mass += clip_negative(w, cell);
    if (out.clipped_mass > limits.clip_budget) {
      throw SolverError("solve_fp_per_state: negative mass beyond clip budget at step " +
                        std::to_string(k));
    }
    const double after = slice_mass(w, cell);
    out.max_step_mass_drift = std::max(out.max_step_mass_drift, std::abs(after - before));
    out.run_mass_drift = std::abs(after - initial_mass);
    if (out.run_mass_drift > limits.max_run_mass_drift) {
      throw SolverError("solve_fp_per_state: mass drift " + std::to_string(out.run_mass_drift) +
                        " at step " + std::to_string(k));
    }
    shift_columns(grid, w, shift(k + 1), out.m.slice(k + 1));
  }
  return out;
}

}  // namespace detail

// Full Fokker-Planck solve for one state value.
inline StateDensity solve_fp_per_state(const MfgProblem& pb, const ControlField& control, double s,
                                       const FpLimits& limits = {}) {
  const Grid& grid = pb.grid();
  detail::check_control(grid, control);
  if (limits.transport == SignalTransport::kComovingFrame) {
    return detail::solve_fp_comoving(pb, control, s, limits);
  }
  const int Nx = grid.Nx(), Nz = grid.Nz();
  const double cell = grid.dx() * grid.dz();
  StateDensity out{s, Field3(grid)};

  const auto phi = signal_cell_density(grid, pb.kernel().signal_law_conditional(grid.t0(), s));
  auto first = out.m.slice(0);
  for (int j = 0; j < Nz; ++j) {
    for (int i = 0; i < Nx; ++i) first[static_cast<std::size_t>(j) * Nx + i] = phi[j] * pb.rho0()[i];
  }

  const double Dx = 0.5 * pb.sigma_prime() * pb.sigma_prime();
  const double Dz = 0.5 * pb.kernel().sigma2();
  const bool limited = limits.transport == SignalTransport::kLimitedExplicit;
  const double nu = s * grid.dt() / grid.dz();
  if (limited && std::abs(nu) > limits.max_courant) {
    const int needed = static_cast<int>(std::ceil(std::abs(s) * (grid.T() - grid.t0()) /
                                                  (limits.max_courant * grid.dz()))) + 2;
    throw SolverError("solve_fp_per_state: signal Courant number " + std::to_string(std::abs(nu)) +
                      " exceeds " + std::to_string(limits.max_courant) + " for state " +
                      std::to_string(s) + "; need grid.Nt >= " + std::to_string(needed));
  }
  const LineStencil stz = detail::constant_drift_z(grid, limited ? 0.0 : s, Dz);
  const double initial_mass = detail::slice_mass(first, cell);
  for (int k = 0; k + 1 < grid.Nt(); ++k) {
    auto cur = out.m.slice(k + 1);
    const auto prev = out.m.slice(k);
    std::copy(prev.begin(), prev.end(), cur.begin());
    const double before = detail::slice_mass(cur, cell);
    if (limited) {
      parallel_for(0, Nx, [&](std::size_t i) {
        std::vector<double> col(Nz), flux;
        for (int j = 0; j < Nz; ++j) col[j] = cur[static_cast<std::size_t>(j) * Nx + i];
        detail::limited_flux_step(col, nu, flux);
        for (int j = 0; j < Nz; ++j) cur[static_cast<std::size_t>(j) * Nx + i] = col[j];
      });
    }
    detail::z_step(grid, stz, true, cur);
    detail::forward_x_step(grid, Dx, control.alpha.slice(k), cur);
    out.clipped_mass += detail::clip_negative(cur, cell);
    if (out.clipped_mass > limits.clip_budget) {
      throw SolverError("solve_fp_per_state: negative mass beyond clip budget at step " +
                        std::to_string(k));
    }
    const double after = detail::slice_mass(cur, cell);
    out.max_step_mass_drift = std::max(out.max_step_mass_drift, std::abs(after - before));
    out.run_mass_drift = std::abs(after - initial_mass);
    if (out.run_mass_drift > limits.max_run_mass_drift) {
      throw SolverError("solve_fp_per_state: mass drift " + std::to_string(out.run_mass_drift) +
                        " at step " + std::to_string(k));
    }
  }
  return out;
}

inline DensityFamily solve_fp_family(const MfgProblem& pb, const ControlField& control,
                                     const FpLimits& limits = {}) {
  DensityFamily fam;
  fam.members.resize(pb.quad().size());
  // Line solves inside each member already run in parallel.
  for (std::size_t q = 0; q < pb.quad().size(); ++q) {
    fam.members[q] = solve_fp_per_state(pb, control, pb.quad().nodes[q], limits);
  }
  return fam;
}

// Factor tau of the state-indexed densities.
inline FactorDensity solve_tau(const MfgProblem& pb, const ControlField& control,
                               const FpLimits& limits = {}) {
  const Grid& grid = pb.grid();
  detail::check_control(grid, control);
  const int Nx = grid.Nx(), Nz = grid.Nz();
  FactorDensity out{Field3(grid)};
  auto first = out.tau.slice(0);
  for (int j = 0; j < Nz; ++j) {
    for (int i = 0; i < Nx; ++i) first[static_cast<std::size_t>(j) * Nx + i] = pb.rho0()[i];
  }
  const double Dx = 0.5 * pb.sigma_prime() * pb.sigma_prime();
  const double Dz = 0.5 * pb.kernel().sigma2();
  for (int k = 0; k + 1 < grid.Nt(); ++k) {
    auto cur = out.tau.slice(k + 1);
    const auto prev = out.tau.slice(k);
    std::copy(prev.begin(), prev.end(), cur.begin());
    const double t_lo = grid.time(k), t_hi = grid.time(k + 1);
    if (limits.tau_transport == SignalTransport::kLimitedExplicit) {
      // Sub-cycle the z/t drift so every substep meets the Courant bound.
      const double peak = grid.Zmax() / t_lo * grid.dt() / grid.dz();
      const int sub = std::max(1, static_cast<int>(std::ceil(peak / limits.max_courant)));
      const double h = (t_hi - t_lo) / sub;
      std::vector<double> nu(Nz);
      for (int n = 0; n < sub; ++n) {
        const double tm = t_lo + (n + 0.5) * h;
        for (int j = 0; j < Nz; ++j) nu[j] = grid.z(j) / tm * h / grid.dz();
        parallel_for(0, Nx, [&](std::size_t i) {
          std::vector<double> col(Nz), scratch;
          for (int j = 0; j < Nz; ++j) col[j] = cur[static_cast<std::size_t>(j) * Nx + i];
          detail::limited_advective_step(col, nu, scratch);
          for (int j = 0; j < Nz; ++j) cur[static_cast<std::size_t>(j) * Nx + i] = col[j];
        });
      }
      detail::z_step(grid, detail::constant_drift_z(grid, 0.0, Dz), false, cur);
    } else {
      const double t_mid = 0.5 * (t_lo + t_hi);
      LineStencil stz = LineStencil::neumann(Nz);
      for (int f = 1; f < Nz; ++f) stz.set_face(f, -grid.z_face(f) / t_mid, Dz, grid.dz());
      detail::z_step(grid, stz, false, cur);
    }
    detail::forward_x_step(grid, Dx, control.alpha.slice(k), cur);
    out.clipped_mass += detail::clip_negative(cur, grid.dx() * grid.dz());
    if (out.clipped_mass > limits.clip_budget) {
      throw SolverError("solve_tau: negative mass beyond clip budget at step " + std::to_string(k));
    }
    for (int j = 0; j < Nz; ++j) {
      const double row_mass = detail::slice_mass(out.tau.row(k + 1, j), grid.dx());
      out.max_x_mass_error = std::max(out.max_x_mass_error, std::abs(row_mass - 1.0));
    }
    if (out.max_x_mass_error > limits.max_run_mass_drift) {
      throw SolverError("solve_tau: conditional mass drift " +
                        std::to_string(out.max_x_mass_error) + " at step " + std::to_string(k));
    }
  }
  return out;
}

struct MarginalResult {
  PositionDensity rho;
  double renormalization = 1.0;  // mass before renormalising
};

// rho_{s,t_k}(x) = sum_z m dz.
inline MarginalResult position_marginal(const Grid& grid, const StateDensity& member, int k) {
  MarginalResult out{PositionDensity{std::vector<double>(grid.Nx(), 0.0)}};
  for (int j = 0; j < grid.Nz(); ++j) {
    const auto row = member.m.row(k, j);
    for (int i = 0; i < grid.Nx(); ++i) out.rho[i] += row[i] * grid.dz();
  }
  out.renormalization = out.rho.normalize();
  return out;
}

// rho_{s,t_k}(x) = sum_z phi_{s t, sigma^2 t}(z) tau(t,z,x) dz.
inline MarginalResult position_marginal(const MfgProblem& pb, const FactorDensity& factor,
                                        double s, int k) {
  const Grid& grid = pb.grid();
  const auto phi = signal_cell_density(grid, pb.kernel().signal_law_conditional(grid.time(k), s));
  MarginalResult out{PositionDensity{std::vector<double>(grid.Nx(), 0.0)}};
  for (int j = 0; j < grid.Nz(); ++j) {
    if (phi[j] == 0.0) continue;
    const auto row = factor.tau.row(k, j);
    for (int i = 0; i < grid.Nx(); ++i) out.rho[i] += phi[j] * row[i] * grid.dz();
  }
  out.renormalization = out.rho.normalize();
  return out;
}

// L1 distance between m_s and phi_{st, sigma^2 t} tau at level k.
inline double factorization_error(const MfgProblem& pb, const StateDensity& member,
                                  const FactorDensity& factor, int k) {
  const Grid& grid = pb.grid();
  const auto phi = signal_cell_density(
      grid, pb.kernel().signal_law_conditional(grid.time(k), member.state));
  double acc = 0.0;
  for (int j = 0; j < grid.Nz(); ++j) {
    const auto m = member.m.row(k, j);
    const auto tau = factor.tau.row(k, j);
    for (int i = 0; i < grid.Nx(); ++i) acc += std::abs(m[i] - phi[j] * tau[i]);
  }
  return acc * grid.dx() * grid.dz();
}

// Exact discrete adjoint of solve_fp_per_state for state s: the backward
// linear equation -u_t = a u_x + s u_z + (sigma^2/2) u_zz + (sigma'^2/2) u_xx
// with the transposed step matrices, so that sum(u m) dz dx is invariant.
inline Field3 solve_adjoint_linear(const MfgProblem& pb, const ControlField& control, double s,
                                   const Slice& terminal) {
  const Grid& grid = pb.grid();
  detail::check_control(grid, control);
  const int Nx = grid.Nx();
  Field3 u(grid);
  auto last = u.slice(grid.Nt() - 1);
  std::copy(terminal.begin(), terminal.end(), last.begin());
  const double Dx = 0.5 * pb.sigma_prime() * pb.sigma_prime();
  const LineStencil stz = detail::constant_drift_z(grid, s, 0.5 * pb.kernel().sigma2());
  for (int k = grid.Nt() - 2; k >= 0; --k) {
    auto cur = u.slice(k);
    const auto next = u.slice(k + 1);
    std::copy(next.begin(), next.end(), cur.begin());
    const auto alpha = control.alpha.slice(k);
    parallel_for(0, grid.Nz(), [&](std::size_t jj) {
      const std::size_t base = jj * Nx;
      LineStencil st = LineStencil::periodic_line(Nx);
      for (int i = 0; i < Nx; ++i) {
        st.set_face(i, 0.5 * (alpha[base + i] + alpha[base + (i + 1) % Nx]), Dx, grid.dx());
      }
      LineWorkspace ws;
      implicit_advective_step(st, grid.dt(), cur.subspan(base, Nx), ws);
    });
    detail::z_step(grid, stz, false, cur);
  }
  return u;
}

}  // namespace mfgsig
