#pragma once

// Tridiagonal and cyclic tridiagonal solvers plus the one-dimensional
// transport-diffusion stencil shared by the HJB and Fokker-Planck solvers.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace mfgsig {

// Solves lo[j] y[j-1] + di[j] y[j] + up[j] y[j+1] = rhs[j] in place (rhs
// becomes y). lo[0] and up[n-1] are ignored. No pivoting: callers pass
// diagonally dominant systems.
inline void solve_tridiagonal(std::span<const double> lo, std::span<const double> di,
                              std::span<const double> up, std::span<double> rhs,
                              std::vector<double>& scratch) {
  const std::size_t n = di.size();
  scratch.resize(n);
  double beta = di[0];
  rhs[0] /= beta;
  for (std::size_t j = 1; j < n; ++j) {
    scratch[j] = up[j - 1] / beta;
    beta = di[j] - lo[j] * scratch[j];
    rhs[j] = (rhs[j] - lo[j] * rhs[j - 1]) / beta;
  }
  for (std::size_t j = n - 1; j-- > 0;) rhs[j] -= scratch[j + 1] * rhs[j + 1];
}

// Periodic variant: lo[0] couples y[n-1] and up[n-1] couples y[0].
// Sherman-Morrison on the corner entries.
inline void solve_cyclic_tridiagonal(std::span<const double> lo, std::span<const double> di,
                                     std::span<const double> up, std::span<double> rhs,
                                     std::vector<double>& scratch) {
  const std::size_t n = di.size();
  const double alpha = up[n - 1];  // row n-1, column 0
  const double beta = lo[0];       // row 0, column n-1
  const double gamma = -di[0];
  std::vector<double> d(di.begin(), di.end());
  d[0] -= gamma;
  d[n - 1] -= alpha * beta / gamma;
  solve_tridiagonal(lo, d, up, rhs, scratch);
  std::vector<double> u(n, 0.0);
  u[0] = gamma;
  u[n - 1] = alpha;
  solve_tridiagonal(lo, d, up, u, scratch);
  const double fact = (rhs[0] + beta * rhs[n - 1] / gamma) /
                      (1.0 + u[0] + beta * u[n - 1] / gamma);
  for (std::size_t j = 0; j < n; ++j) rhs[j] -= fact * u[j];
}

// Exponentially fitted diffusion D (Pe/2) coth(Pe/2), Pe = v h / D. Never
// smaller than |v| h / 2, which keeps the centred stencil monotone.
inline double fitted_diffusion(double D, double v, double h) {
  if (D <= 0.0) return 0.5 * std::abs(v) * h;
  const double x = 0.5 * v * h / D;
  if (std::abs(x) < 1e-4) return D * (1.0 + x * x / 3.0);
  return D * x / std::tanh(x);
}

// Face coefficients of the advective operator
//   (L u)_j = P_{j+1/2} (u_{j+1} - u_j) - M_{j-1/2} (u_j - u_{j-1}),
//   P_f = v_f / 2h + De_f / h^2,  M_f = -v_f / 2h + De_f / h^2,
// whose negative transpose is the conservative flux operator with face flux
// v_f (m_j + m_{j+1}) / 2 - De_f (m_{j+1} - m_j) / h. Both are M-matrix
// stencils for every v_f.
//
// Neumann lines have n + 1 faces with the two boundary faces closed.
// Periodic lines have n faces; face j sits between cells j and j+1 (mod n).
struct LineStencil {
  bool periodic = false;
  std::vector<double> P;
  std::vector<double> M;

  std::size_t cells() const { return periodic ? P.size() : P.size() - 1; }

  void set_face(std::size_t f, double v, double D, double h) {
    const double de = fitted_diffusion(D, v, h);
    P[f] = v / (2.0 * h) + de / (h * h);
    M[f] = -v / (2.0 * h) + de / (h * h);
  }

  static LineStencil neumann(std::size_t n) {
    return {false, std::vector<double>(n + 1, 0.0), std::vector<double>(n + 1, 0.0)};
  }
  static LineStencil periodic_line(std::size_t n) {
    return {true, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  }

  // Face indices to the right/left of cell j.
  std::size_t right(std::size_t j) const { return periodic ? j : j + 1; }
  std::size_t left(std::size_t j) const {
    const std::size_t n = cells();
    return periodic ? (j + n - 1) % n : j;
  }
};

struct LineWorkspace {
  std::vector<double> lo, di, up, scratch;
  void resize(std::size_t n) {
    lo.resize(n);
    di.resize(n);
    up.resize(n);
  }
};

// Solves (I - dt L) u = rhs in place.
inline void implicit_advective_step(const LineStencil& st, double dt, std::span<double> rhs,
                                    LineWorkspace& ws) {
  const std::size_t n = st.cells();
  ws.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double p = st.P[st.right(j)];
    const double m = st.M[st.left(j)];
    ws.up[j] = -dt * p;
    ws.lo[j] = -dt * m;
    ws.di[j] = 1.0 + dt * (p + m);
  }
  if (st.periodic) {
    solve_cyclic_tridiagonal(ws.lo, ws.di, ws.up, rhs, ws.scratch);
  } else {
    solve_tridiagonal(ws.lo, ws.di, ws.up, rhs, ws.scratch);
  }
}

// Solves (I - dt L^T) m = rhs in place: the implicit conservative step.
inline void implicit_conservative_step(const LineStencil& st, double dt, std::span<double> rhs,
                                       LineWorkspace& ws) {
  const std::size_t n = st.cells();
  ws.resize(n);
  // Column j of L holds P_{j-1/2} in row j-1 and M_{j+1/2} in row j+1.
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t fr = st.right(j);
    const std::size_t fl = st.left(j);
    ws.di[j] = 1.0 + dt * (st.P[fr] + st.M[fl]);
    ws.lo[j] = -dt * st.P[fl];  // coefficient of m_{j-1}
    ws.up[j] = -dt * st.M[fr];  // coefficient of m_{j+1}
  }
  if (st.periodic) {
    solve_cyclic_tridiagonal(ws.lo, ws.di, ws.up, rhs, ws.scratch);
  } else {
    solve_tridiagonal(ws.lo, ws.di, ws.up, rhs, ws.scratch);
  }
}

}  // namespace mfgsig
