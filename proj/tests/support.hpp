#pragma once

#include <memory>
#include <string>

#include "mfgsig/mfgsig.hpp"

namespace mfgsig::testing {

// Small problem for fast unit tests.
inline MfgProblem small_problem(const std::string& cost = "product_differentiation", int Nt = 24,
                                int Nx = 16, int Nz = 24, int Q = 6, double sigma = 1.0,
                                double sigma_prime = 0.5) {
  const auto quad = make_state_quadrature(Q);
  const Grid grid(1.0, Nt, Nx, Nz, derive_zmax(quad.max_abs_node(), sigma, 1.0));
  return MfgProblem(grid, BeliefKernel(sigma), sigma_prime, quad,
                    CostRegistry::instance().make(cost, {}), PositionDensity::uniform(Nx));
}

inline MfgProblem with_model(const MfgProblem& pb, std::shared_ptr<const CostModel> model) {
  return MfgProblem(pb.grid(), pb.kernel(), pb.sigma_prime(), pb.quad(), std::move(model),
                    pb.rho0());
}

// Composite Simpson rule on [a, b] with n (even) panels.
template <typename Fn>
double simpson(Fn&& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return acc * h / 3.0;
}

}  // namespace mfgsig::testing
