#pragma once

// Run configuration: a JSON document validated field by field before any
// solver allocation. Errors carry the dotted path of the offending key.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mfgsig/costs.hpp"
#include "mfgsig/equilibrium.hpp"
#include "mfgsig/grid.hpp"
#include "mfgsig/problem.hpp"

namespace mfgsig {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct GridBlock {
  double T = 1.0;
  int Nt = 100;
  int Nx = 64;
  int Nz = 64;
  std::optional<double> Zmax;  // derived from the quadrature when absent
  std::optional<double> t0;    // T / Nt when absent
};

struct DensitySpec {
  std::string kind = "uniform";  // uniform | bump
  double center = 0.5;
  double width = 0.1;
};

struct ModelBlock {
  double sigma = 1.0;
  double sigma_prime = 0.5;
  std::string cost = "product_differentiation";
  CostParams params;
  DensitySpec rho0;
};

struct SolverBlock {
  int Q = 16;
  Damping damping = Damping::kFixed;
  double delta = 0.5;
  double tol = 1e-4;
  int k_max = 200;
  int relabel_passes = 1;
};

struct SimBlock {
  int N = 1000;
  double delta = 0.005;
  int replicas = 0;                       // 0 skips the epsilon study
  std::string deviation = "best_response";  // best_response | equilibrium
  int ghosts = 1000;                       // paired deviator samples per replica and state
  std::string state_draw = "prior";       // prior | fixed
  double state = 0.0;
};

struct MonotoneBlock {
  int pairs = 200;
};

struct RunConfig {
  GridBlock grid;
  ModelBlock model;
  SolverBlock solver;
  std::optional<SimBlock> sim;
  MonotoneBlock monotone;
  std::uint64_t seed = 1;
  std::string output = "run";
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& path,
                           const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(path + "." + key, "unknown key");
  }
}

inline const json* member(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

inline const json& object_at(const json& obj, const std::string& key, const std::string& path) {
  const json* v = member(obj, key);
  if (v == nullptr || !v->is_object()) throw ConfigError(path + "." + key, "expected an object");
  return *v;
}

inline double read_number(const json& obj, const std::string& key, const std::string& path,
                          double fallback) {
  const json* v = member(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number()) throw ConfigError(path + "." + key, "expected a number");
  const double d = v->get<double>();
  if (!std::isfinite(d)) throw ConfigError(path + "." + key, "must be finite");
  return d;
}

inline int read_int(const json& obj, const std::string& key, const std::string& path,
                    int fallback) {
  const json* v = member(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number_integer()) throw ConfigError(path + "." + key, "expected an integer");
  return v->get<int>();
}

inline std::string read_string(const json& obj, const std::string& key, const std::string& path,
                               const std::string& fallback) {
  const json* v = member(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_string()) throw ConfigError(path + "." + key, "expected a string");
  return v->get<std::string>();
}

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& doc) {
  using namespace detail;
  if (!doc.is_object()) throw ConfigError("$", "expected an object");
  reject_unknown(doc, "$", {"schema_version", "grid", "model", "solver", "sim", "monotone", "seed",
                            "output"});
  RunConfig c;
  if (const json* v = member(doc, "schema_version")) {
    require(v->is_string() && v->get<std::string>() == "1", "$.schema_version",
            "unsupported schema version (expected \"1\")");
  }
  if (const json* v = member(doc, "seed")) {
    require(v->is_number_unsigned() || (v->is_number_integer() && v->get<long long>() >= 0),
            "$.seed", "expected a non-negative integer");
    c.seed = v->get<std::uint64_t>();
  }
  c.output = read_string(doc, "output", "$", c.output);

  if (member(doc, "grid")) {
    const json& g = object_at(doc, "grid", "$");
    reject_unknown(g, "$.grid", {"T", "Nt", "Nx", "Nz", "Zmax", "t0"});
    c.grid.T = read_number(g, "T", "$.grid", c.grid.T);
    c.grid.Nt = read_int(g, "Nt", "$.grid", c.grid.Nt);
    c.grid.Nx = read_int(g, "Nx", "$.grid", c.grid.Nx);
    c.grid.Nz = read_int(g, "Nz", "$.grid", c.grid.Nz);
    if (member(g, "Zmax")) c.grid.Zmax = read_number(g, "Zmax", "$.grid", 0.0);
    if (member(g, "t0")) c.grid.t0 = read_number(g, "t0", "$.grid", 0.0);
  }
  require(c.grid.T > 0.0, "$.grid.T", "must be > 0");
  require(c.grid.Nt >= 2, "$.grid.Nt", "must be >= 2");
  require(c.grid.Nx >= 8, "$.grid.Nx", "must be >= 8");
  require(c.grid.Nz >= 8, "$.grid.Nz", "must be >= 8");
  if (c.grid.Zmax) require(*c.grid.Zmax > 0.0, "$.grid.Zmax", "must be > 0");
  if (c.grid.t0) require(*c.grid.t0 > 0.0 && *c.grid.t0 < c.grid.T, "$.grid.t0", "must lie in (0, T)");

  if (member(doc, "model")) {
    const json& m = object_at(doc, "model", "$");
    reject_unknown(m, "$.model", {"sigma", "sigma_prime", "cost", "params", "rho0"});
    c.model.sigma = read_number(m, "sigma", "$.model", c.model.sigma);
    c.model.sigma_prime = read_number(m, "sigma_prime", "$.model", c.model.sigma_prime);
    c.model.cost = read_string(m, "cost", "$.model", c.model.cost);
    if (member(m, "params")) {
      const json& p = object_at(m, "params", "$.model");
      for (const auto& [key, value] : p.items()) {
        require(value.is_number(), "$.model.params." + key, "expected a number");
        c.model.params[key] = value.get<double>();
      }
    }
    if (member(m, "rho0")) {
      const json& r = object_at(m, "rho0", "$.model");
      reject_unknown(r, "$.model.rho0", {"kind", "center", "width"});
      c.model.rho0.kind = read_string(r, "kind", "$.model.rho0", c.model.rho0.kind);
      c.model.rho0.center = read_number(r, "center", "$.model.rho0", c.model.rho0.center);
      c.model.rho0.width = read_number(r, "width", "$.model.rho0", c.model.rho0.width);
    }
  }
  require(c.model.sigma > 0.0, "$.model.sigma", "must be > 0");
  require(c.model.sigma_prime > 0.0, "$.model.sigma_prime", "must be > 0");
  {
    const auto names = CostRegistry::instance().names();
    bool known = false;
    for (const auto& n : names) known = known || n == c.model.cost;
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    require(known, "$.model.cost", "unknown cost model '" + c.model.cost + "' (known: " + list + ")");
    const auto& keys = CostRegistry::instance().parameter_names(c.model.cost);
    for (const auto& [key, value] : c.model.params) {
      require(std::find(keys.begin(), keys.end(), key) != keys.end(), "$.model.params." + key,
              "not a parameter of '" + c.model.cost + "'");
    }
  }
  require(c.model.rho0.kind == "uniform" || c.model.rho0.kind == "bump", "$.model.rho0.kind",
          "expected \"uniform\" or \"bump\"");
  require(c.model.rho0.width > 0.0, "$.model.rho0.width", "must be > 0");

  if (member(doc, "solver")) {
    const json& s = object_at(doc, "solver", "$");
    reject_unknown(s, "$.solver", {"Q", "damping", "delta", "tol", "k_max", "relabel_passes"});
    c.solver.Q = read_int(s, "Q", "$.solver", c.solver.Q);
    const std::string damping = read_string(s, "damping", "$.solver", "fixed");
    require(damping == "fixed" || damping == "fictitious_play", "$.solver.damping",
            "expected \"fixed\" or \"fictitious_play\"");
    c.solver.damping = damping == "fixed" ? Damping::kFixed : Damping::kFictitiousPlay;
    c.solver.delta = read_number(s, "delta", "$.solver", c.solver.delta);
    c.solver.tol = read_number(s, "tol", "$.solver", c.solver.tol);
    c.solver.k_max = read_int(s, "k_max", "$.solver", c.solver.k_max);
    c.solver.relabel_passes = read_int(s, "relabel_passes", "$.solver", c.solver.relabel_passes);
  }
  require(c.solver.Q >= 2 && c.solver.Q <= 200, "$.solver.Q", "must lie in [2, 200]");
  require(c.solver.delta > 0.0 && c.solver.delta <= 1.0, "$.solver.delta", "must lie in (0, 1]");
  require(c.solver.tol > 0.0, "$.solver.tol", "must be > 0");
  require(c.solver.k_max >= 0, "$.solver.k_max", "must be >= 0");
  require(c.solver.relabel_passes >= 0, "$.solver.relabel_passes", "must be >= 0");

  if (member(doc, "sim")) {
    const json& s = object_at(doc, "sim", "$");
    reject_unknown(s, "$.sim", {"N", "delta", "replicas", "deviation", "ghosts", "state_draw", "state"});
    SimBlock b;
    b.N = read_int(s, "N", "$.sim", b.N);
    b.delta = read_number(s, "delta", "$.sim", b.delta);
    b.replicas = read_int(s, "replicas", "$.sim", b.replicas);
    b.deviation = read_string(s, "deviation", "$.sim", b.deviation);
    b.ghosts = read_int(s, "ghosts", "$.sim", b.ghosts);
    b.state_draw = read_string(s, "state_draw", "$.sim", b.state_draw);
    b.state = read_number(s, "state", "$.sim", b.state);
    require(b.N >= 2, "$.sim.N", "must be >= 2");
    require(b.delta > 0.0, "$.sim.delta", "must be > 0");
    const double t0 = c.grid.t0.value_or(c.grid.T / c.grid.Nt);
    const double rounds = (c.grid.T - t0) / b.delta;
    require(std::abs(rounds - std::round(rounds)) <= 1e-9 * std::max(1.0, rounds) &&
                std::round(rounds) >= 1.0,
            "$.sim.delta", "(grid.T - grid.t0) / sim.delta must be an integer round count");
    require(b.replicas == 0 || b.replicas >= 2, "$.sim.replicas", "must be 0 or >= 2");
    require(b.deviation == "best_response" || b.deviation == "equilibrium", "$.sim.deviation",
            "expected \"best_response\" or \"equilibrium\"");
    require(b.ghosts >= 1, "$.sim.ghosts", "must be >= 1");
    require(b.state_draw == "prior" || b.state_draw == "fixed", "$.sim.state_draw",
            "expected \"prior\" or \"fixed\"");
    c.sim = b;
  }

  if (member(doc, "monotone")) {
    const json& m = object_at(doc, "monotone", "$");
    reject_unknown(m, "$.monotone", {"pairs"});
    c.monotone.pairs = read_int(m, "pairs", "$.monotone", c.monotone.pairs);
  }
  require(c.monotone.pairs >= 1, "$.monotone.pairs", "must be >= 1");
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("$", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("$", "cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Grid make_grid(const RunConfig& c, const StateQuadrature& quad) {
  const double zmax =
      c.grid.Zmax ? *c.grid.Zmax : derive_zmax(quad.max_abs_node(), c.model.sigma, c.grid.T);
  return Grid(c.grid.T, c.grid.Nt, c.grid.Nx, c.grid.Nz, zmax, c.grid.t0.value_or(0.0));
}

inline PositionDensity make_density(const DensitySpec& d, int Nx) {
  return d.kind == "bump" ? PositionDensity::bump(Nx, d.center, d.width)
                          : PositionDensity::uniform(Nx);
}

inline MfgProblem make_problem(const RunConfig& c) {
  const auto quad = make_state_quadrature(c.solver.Q);
  const Grid grid = make_grid(c, quad);
  return MfgProblem(grid, BeliefKernel(c.model.sigma), c.model.sigma_prime, quad,
                    CostRegistry::instance().make(c.model.cost, c.model.params),
                    make_density(c.model.rho0, grid.Nx()));
}

inline EquilibriumOptions equilibrium_options(const RunConfig& c) {
  EquilibriumOptions o;
  o.damping = c.solver.damping;
  o.delta = c.solver.delta;
  o.tol = c.solver.tol;
  o.k_max = c.solver.k_max;
  o.hjb.relabel_passes = c.solver.relabel_passes;
  return o;
}

}  // namespace mfgsig
