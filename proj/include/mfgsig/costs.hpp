#pragma once

// State-dependent cost triple (C, F, G), their belief-expected versions and
// the Hamiltonian H(t,z,x,p) = sup_a { -a p - C~(t,z,x,a) }.

#include <cmath>
#include <functional>
#include <algorithm>
#include <limits>
#include <map>
#include <numbers>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mfgsig/belief.hpp"
#include "mfgsig/grid.hpp"

namespace mfgsig {

enum class CostStructure { kSeparableQuadratic, kGeneral };

// Cost model interface. Interaction costs are evaluated on the whole position
// grid at once (cell centres x_i = (i + 1/2) / Nx, Nx = rho.size()).
class CostModel {
 public:
  virtual ~CostModel() = default;

  virtual std::string name() const = 0;
  virtual CostStructure structure() const { return CostStructure::kSeparableQuadratic; }

  // Separable-quadratic models: C(s,x,a) = state_cost(s,x) + a^2/2.
  virtual double state_cost(double /*s*/, double /*x*/) const { return 0.0; }

  virtual double control_cost(double s, double x, double a) const {
    return state_cost(s, x) + 0.5 * a * a;
  }
  virtual double control_cost_da(double s, double x, double a) const {
    const double h = 1e-5 * (1.0 + std::abs(a));
    return (control_cost(s, x, a + h) - control_cost(s, x, a - h)) / (2.0 * h);
  }
  virtual double control_cost_daa(double s, double x, double a) const {
    const double h = 1e-4 * (1.0 + std::abs(a));
    return (control_cost(s, x, a + h) - 2.0 * control_cost(s, x, a) + control_cost(s, x, a - h)) /
           (h * h);
  }
  // Lower bound on d^2 C / da^2.
  virtual double convexity_constant() const { return 1.0; }

  virtual void flow_cost(double s, const PositionDensity& rho, std::span<double> out) const = 0;
  virtual void terminal_cost(double s, const PositionDensity& rho, std::span<double> out) const = 0;

  // False when F and G ignore the density argument; the fixed-point map is
  // then constant.
  virtual bool density_dependent() const = 0;
};

using CostParams = std::map<std::string, double>;

namespace detail {
inline double param(const CostParams& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}
}  // namespace detail

// C = a^2/2, F = G = 0.
class ZeroCost : public CostModel {
 public:
  std::string name() const override { return "zero"; }
  void flow_cost(double, const PositionDensity&, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
  }
  void terminal_cost(double, const PositionDensity&, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
  }
  bool density_dependent() const override { return false; }
};

// C = a^2/2, F = value, G = 0.
class ConstantFlowCost : public CostModel {
 public:
  explicit ConstantFlowCost(double value = 1.0) : value_(value) {}
  std::string name() const override { return "constant_flow"; }
  void flow_cost(double, const PositionDensity&, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), value_);
  }
  void terminal_cost(double, const PositionDensity&, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
  }
  bool density_dependent() const override { return false; }

 private:
  double value_;
};

// Product differentiation: F = 0, C = a^2/2 and
//   G(s,x,rho) = a |x - c s|^2 - b int |x - y|^2 rho(dy)
// with torus distances.
class ProductDifferentiationCost : public CostModel {
 public:
  ProductDifferentiationCost(double ideal_weight = 1.0, double repulsion_weight = 1.0,
                             double ideal_scale = 1.0)
      : a_(ideal_weight), b_(repulsion_weight), c_(ideal_scale) {}

  std::string name() const override { return "product_differentiation"; }
  void flow_cost(double, const PositionDensity&, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
  }
  void terminal_cost(double s, const PositionDensity& rho, std::span<double> out) const override {
    const int Nx = static_cast<int>(rho.size());
    const double dx = 1.0 / Nx;
    for (int i = 0; i < Nx; ++i) {
      const double x = (i + 0.5) * dx;
      const double d = torus_distance(x, c_ * s);
      double spread = 0.0;
      if (b_ != 0.0) {
        for (int k = 0; k < Nx; ++k) {
          const double e = torus_distance(x, (k + 0.5) * dx);
          spread += e * e * rho[k];
        }
        spread *= dx;
      }
      out[i] = a_ * d * d - b_ * spread;
    }
  }
  bool density_dependent() const override { return b_ != 0.0; }

 private:
  double a_, b_, c_;
};

// Local crowd aversion, monotone state by state:
//   F(s,x,rho) = lambda rho(x),  G(s,x,rho) = a |x - c s|^2,  C = a^2/2.
class CrowdAversionCost : public CostModel {
 public:
  CrowdAversionCost(double crowd_weight = 1.0, double ideal_weight = 1.0, double ideal_scale = 1.0)
      : lambda_(crowd_weight), a_(ideal_weight), c_(ideal_scale) {}

  std::string name() const override { return "crowd_aversion"; }
  void flow_cost(double, const PositionDensity& rho, std::span<double> out) const override {
    for (std::size_t i = 0; i < rho.size(); ++i) out[i] = lambda_ * rho[i];
  }
  void terminal_cost(double s, const PositionDensity& rho, std::span<double> out) const override {
    const int Nx = static_cast<int>(rho.size());
    for (int i = 0; i < Nx; ++i) {
      const double d = torus_distance((i + 0.5) / Nx, c_ * s);
      out[i] = a_ * d * d;
    }
  }
  bool density_dependent() const override { return lambda_ != 0.0; }

 private:
  double lambda_, a_, c_;
};

// State-dependent but density-free: F = f cos(2 pi x), G = a |x - c s|^2.
class UncoupledCost : public CostModel {
 public:
  UncoupledCost(double flow_weight = 0.5, double ideal_weight = 1.0, double ideal_scale = 1.0)
      : f_(flow_weight), a_(ideal_weight), c_(ideal_scale) {}

  std::string name() const override { return "uncoupled"; }
  void flow_cost(double, const PositionDensity& rho, std::span<double> out) const override {
    const int Nx = static_cast<int>(rho.size());
    for (int i = 0; i < Nx; ++i) out[i] = f_ * std::cos(2.0 * std::numbers::pi * (i + 0.5) / Nx);
  }
  void terminal_cost(double s, const PositionDensity& rho, std::span<double> out) const override {
    const int Nx = static_cast<int>(rho.size());
    for (int i = 0; i < Nx; ++i) {
      const double d = torus_distance((i + 0.5) / Nx, c_ * s);
      out[i] = a_ * d * d;
    }
  }
  bool density_dependent() const override { return false; }

 private:
  double f_, a_, c_;
};

// Non-quadratic control cost C = a^4/4 + a^2/2, with the product
// differentiation terminal cost.
class QuarticControlCost : public ProductDifferentiationCost {
 public:
  using ProductDifferentiationCost::ProductDifferentiationCost;
  std::string name() const override { return "quartic_control"; }
  CostStructure structure() const override { return CostStructure::kGeneral; }
  double control_cost(double, double, double a) const override {
    return 0.25 * a * a * a * a + 0.5 * a * a;
  }
  double control_cost_da(double, double, double a) const override { return a * a * a + a; }
  double control_cost_daa(double, double, double a) const override { return 3.0 * a * a + 1.0; }
};

// Model assembled from callables; the library-level registration path for
// custom costs.
class FunctionalCostModel : public CostModel {
 public:
  using PointCost = std::function<double(double s, double x, const PositionDensity& rho, int i)>;
  using ControlCost = std::function<double(double s, double x, double a)>;

  FunctionalCostModel(std::string name, PointCost flow, PointCost terminal,
                      bool density_dependent, ControlCost control = nullptr,
                      double convexity = 1.0)
      : name_(std::move(name)),
        flow_(std::move(flow)),
        terminal_(std::move(terminal)),
        control_(std::move(control)),
        density_dependent_(density_dependent),
        convexity_(convexity) {}

  std::string name() const override { return name_; }
  CostStructure structure() const override {
    return control_ ? CostStructure::kGeneral : CostStructure::kSeparableQuadratic;
  }
  double control_cost(double s, double x, double a) const override {
    return control_ ? control_(s, x, a) : 0.5 * a * a;
  }
  double convexity_constant() const override { return convexity_; }
  void flow_cost(double s, const PositionDensity& rho, std::span<double> out) const override {
    const int Nx = static_cast<int>(rho.size());
    for (int i = 0; i < Nx; ++i) out[i] = flow_ ? flow_(s, (i + 0.5) / Nx, rho, i) : 0.0;
  }
  void terminal_cost(double s, const PositionDensity& rho, std::span<double> out) const override {
    const int Nx = static_cast<int>(rho.size());
    for (int i = 0; i < Nx; ++i) out[i] = terminal_ ? terminal_(s, (i + 0.5) / Nx, rho, i) : 0.0;
  }
  bool density_dependent() const override { return density_dependent_; }

 private:
  std::string name_;
  PointCost flow_, terminal_;
  ControlCost control_;
  bool density_dependent_;
  double convexity_;
};

using CostFactory = std::function<std::shared_ptr<const CostModel>(const CostParams&)>;

class CostRegistry {
 public:
  static CostRegistry& instance() {
    static CostRegistry registry;
    return registry;
  }

  void add(const std::string& name, std::vector<std::string> keys, CostFactory factory) {
    factories_[name] = std::move(factory);
    keys_[name] = std::move(keys);
  }

  // Parameter names the model reads; other keys are configuration errors.
  const std::vector<std::string>& parameter_names(const std::string& name) const {
    auto it = keys_.find(name);
    if (it == keys_.end()) throw std::invalid_argument("unknown cost model '" + name + "'");
    return it->second;
  }

  std::shared_ptr<const CostModel> make(const std::string& name, const CostParams& params) const {
    auto it = factories_.find(name);
    if (it == factories_.end()) throw std::invalid_argument("unknown cost model '" + name + "'");
    return it->second(params);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : factories_) out.push_back(k);
    return out;
  }

 private:
  CostRegistry() {
    using detail::param;
    add("zero", {}, [](const CostParams&) { return std::make_shared<ZeroCost>(); });
    add("constant_flow", {"value"}, [](const CostParams& p) {
      return std::make_shared<ConstantFlowCost>(param(p, "value", 1.0));
    });
    add("product_differentiation", {"ideal_weight", "repulsion_weight", "ideal_scale"}, [](const CostParams& p) {
      return std::make_shared<ProductDifferentiationCost>(param(p, "ideal_weight", 1.0),
                                                          param(p, "repulsion_weight", 1.0),
                                                          param(p, "ideal_scale", 1.0));
    });
    add("crowd_aversion", {"crowd_weight", "ideal_weight", "ideal_scale"}, [](const CostParams& p) {
      return std::make_shared<CrowdAversionCost>(param(p, "crowd_weight", 1.0),
                                                 param(p, "ideal_weight", 1.0),
                                                 param(p, "ideal_scale", 1.0));
    });
    add("uncoupled", {"flow_weight", "ideal_weight", "ideal_scale"}, [](const CostParams& p) {
      return std::make_shared<UncoupledCost>(param(p, "flow_weight", 0.5),
                                             param(p, "ideal_weight", 1.0),
                                             param(p, "ideal_scale", 1.0));
    });
    add("quartic_control", {"ideal_weight", "repulsion_weight", "ideal_scale"}, [](const CostParams& p) {
      return std::make_shared<QuarticControlCost>(param(p, "ideal_weight", 1.0),
                                                  param(p, "repulsion_weight", 1.0),
                                                  param(p, "ideal_scale", 1.0));
    });
  }

  std::map<std::string, CostFactory> factories_;
  std::map<std::string, std::vector<std::string>> keys_;
};

// Samples d^2C/da^2 on a seeded set of (s, x, a) and returns the minimum.
// Throws when a general model fails strong convexity.
inline double verify_strong_convexity(const CostModel& model, int samples = 256,
                                      unsigned seed = 7) {
  if (model.structure() == CostStructure::kSeparableQuadratic) return 1.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> state(0.0, 2.0);
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  std::uniform_real_distribution<double> ctrl(-10.0, 10.0);
  double lowest = std::numeric_limits<double>::infinity();
  for (int n = 0; n < samples; ++n) {
    lowest = std::min(lowest, model.control_cost_daa(state(rng), pos(rng), ctrl(rng)));
  }
  if (!(lowest > 0.0)) {
    throw std::invalid_argument("cost model '" + model.name() +
                                "' is not strongly convex in the control");
  }
  return lowest;
}

// Per-node interaction costs F(s_q, ., rho_q) for a family indexed by the
// quadrature nodes.
inline std::vector<std::vector<double>> state_cost_table(
    const CostModel& model, const StateQuadrature& quad,
    std::span<const PositionDensity> rho_family, bool terminal) {
  if (rho_family.size() != quad.size()) {
    throw std::invalid_argument("density family size " + std::to_string(rho_family.size()) +
                                " does not match quadrature size " +
                                std::to_string(quad.size()));
  }
  std::vector<std::vector<double>> table(quad.size());
  for (std::size_t q = 0; q < quad.size(); ++q) {
    table[q].resize(rho_family[q].size());
    if (terminal) {
      model.terminal_cost(quad.nodes[q], rho_family[q], table[q]);
    } else {
      model.flow_cost(quad.nodes[q], rho_family[q], table[q]);
    }
  }
  return table;
}

namespace detail {
// Periodic linear interpolation of cell-centred values at x.
inline double interpolate_periodic(std::span<const double> values, double x) {
  const int Nx = static_cast<int>(values.size());
  double u = x * Nx - 0.5;
  u -= std::floor(u / Nx) * Nx;
  const int i0 = static_cast<int>(std::floor(u)) % Nx;
  const int i1 = (i0 + 1) % Nx;
  const double w = u - std::floor(u);
  return (1.0 - w) * values[i0] + w * values[i1];
}

inline double expected_from_table(const std::vector<std::vector<double>>& table,
                                  std::span<const double> weights, double x) {
  double acc = 0.0;
  for (std::size_t q = 0; q < table.size(); ++q) {
    acc += weights[q] * interpolate_periodic(table[q], x);
  }
  return acc;
}
}  // namespace detail

// F~(t,z,x) = sum_q w~_q(t,z) F(s_q, x, rho_{s_q,t}).
inline double expected_flow_cost(const CostModel& model, const StateQuadrature& quad,
                                 const BeliefKernel& kernel, double t, double z, double x,
                                 std::span<const PositionDensity> rho_family) {
  const auto table = state_cost_table(model, quad, rho_family, false);
  return detail::expected_from_table(table, posterior_weights(quad, kernel, t, z).weights, x);
}

// G~(z,x) = sum_q w~_q(T,z) G(s_q, x, rho_{s_q,T}).
inline double expected_terminal_cost(const CostModel& model, const StateQuadrature& quad,
                                     const BeliefKernel& kernel, double T, double z, double x,
                                     std::span<const PositionDensity> rho_family_at_T) {
  const auto table = state_cost_table(model, quad, rho_family_at_T, true);
  return detail::expected_from_table(table, posterior_weights(quad, kernel, T, z).weights, x);
}

// Expected control cost at a fixed (t, z, x), given the posterior weights.
class ExpectedControlCost {
 public:
  ExpectedControlCost(const CostModel& model, const StateQuadrature& quad,
                      std::span<const double> weights, double x)
      : model_(model), quad_(quad), weights_(weights), x_(x) {
    state_part_ = 0.0;
    if (model.structure() == CostStructure::kSeparableQuadratic) {
      for (std::size_t q = 0; q < quad.size(); ++q) {
        state_part_ += weights[q] * model.state_cost(quad.nodes[q], x);
      }
    }
  }

  bool quadratic() const { return model_.structure() == CostStructure::kSeparableQuadratic; }
  double state_part() const { return state_part_; }

  double value(double a) const {
    if (quadratic()) return state_part_ + 0.5 * a * a;
    return sum([&](double s) { return model_.control_cost(s, x_, a); });
  }
  double d1(double a) const {
    if (quadratic()) return a;
    return sum([&](double s) { return model_.control_cost_da(s, x_, a); });
  }
  double d2(double a) const {
    if (quadratic()) return 1.0;
    return sum([&](double s) { return model_.control_cost_daa(s, x_, a); });
  }

 private:
  template <typename Fn>
  double sum(Fn&& fn) const {
    double acc = 0.0;
    for (std::size_t q = 0; q < quad_.size(); ++q) {
      if (weights_[q] != 0.0) acc += weights_[q] * fn(quad_.nodes[q]);
    }
    return acc;
  }

  const CostModel& model_;
  const StateQuadrature& quad_;
  std::span<const double> weights_;
  double x_;
  double state_part_;
};

struct HamiltonianValue {
  double value = 0.0;
  double control = 0.0;  // maximiser a*, equal to -D_p H
};

class HamiltonianError : public std::runtime_error {
 public:
  HamiltonianError(double t, double z, double x, double p)
      : std::runtime_error(describe(t, z, x, p)), t_(t), z_(z), x_(x), p_(p) {}
  double t() const { return t_; }
  double z() const { return z_; }
  double x() const { return x_; }
  double p() const { return p_; }

 private:
  static std::string describe(double t, double z, double x, double p) {
    std::ostringstream os;
    os << "hamiltonian: Newton did not converge at (t=" << t << ", z=" << z << ", x=" << x
       << ", p=" << p << ")";
    return os.str();
  }
  double t_, z_, x_, p_;
};

// sup_a { -a p - C~(a) } by damped Newton on the first-order condition
// -p - C~'(a) = 0; the quadratic case is closed form.
inline HamiltonianValue maximize_hamiltonian(const ExpectedControlCost& cost, double p,
                                             double t = 0.0, double z = 0.0, double x = 0.0,
                                             double guess = 0.0) {
  if (cost.quadratic()) return {0.5 * p * p - cost.state_part(), -p};
  auto objective = [&](double a) { return -a * p - cost.value(a); };
  double a = guess;
  double f = objective(a);
  for (int it = 0; it < 100; ++it) {
    const double g = -p - cost.d1(a);
    const double curvature = cost.d2(a);
    if (!(curvature > 0.0)) break;
    double step = g / curvature;
    double trial = a + step;
    double ft = objective(trial);
    int halvings = 0;
    while (ft < f - 1e-14 * (1.0 + std::abs(f)) && halvings < 60) {
      step *= 0.5;
      trial = a + step;
      ft = objective(trial);
      ++halvings;
    }
    a = trial;
    f = ft;
    if (std::abs(step) < 1e-10 * (1.0 + std::abs(a))) return {f, a};
  }
  throw HamiltonianError(t, z, x, p);
}

inline HamiltonianValue hamiltonian(const CostModel& model, const StateQuadrature& quad,
                                    const BeliefKernel& kernel, double t, double z, double x,
                                    double p) {
  const auto pw = posterior_weights(quad, kernel, t, z);
  ExpectedControlCost cost(model, quad, pw.weights, x);
  return maximize_hamiltonian(cost, p, t, z, x);
}

inline double hamiltonian_p_derivative(const CostModel& model, const StateQuadrature& quad,
                                       const BeliefKernel& kernel, double t, double z, double x,
                                       double p) {
  return -hamiltonian(model, quad, kernel, t, z, x, p).control;
}

}  // namespace mfgsig
