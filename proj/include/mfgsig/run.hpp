#pragma once

// Subcommand drivers: each builds the problem from a validated RunConfig,
// runs the solvers and writes its artifacts into the output directory.
// The return value is the process exit status.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfgsig/config.hpp"
#include "mfgsig/equilibrium.hpp"
#include "mfgsig/io.hpp"
#include "mfgsig/sim.hpp"
#include "mfgsig/validation.hpp"

namespace mfgsig {

enum ExitCode : int {
  kExitOk = 0,
  kExitGateFailed = 1,
  kExitConfig = 2,
  kExitSolver = 3,
  kExitNotConverged = 4,  // only with --strict
};

struct RunContext {
  RunConfig config;
  std::string config_text;  // verbatim source, empty when defaults are used
  std::filesystem::path out;
  bool strict = false;
  std::ostream* log = &std::cerr;
};

namespace detail {

inline nlohmann::json grid_json(const Grid& g) {
  return {{"T", g.T()}, {"Nt", g.Nt()}, {"Nx", g.Nx()}, {"Nz", g.Nz()}, {"Zmax", g.Zmax()},
          {"t0", g.t0()}, {"dt", g.dt()}, {"dx", g.dx()}, {"dz", g.dz()}};
}

inline nlohmann::json resolved_config(const RunContext& ctx, const MfgProblem& pb) {
  const RunConfig& c = ctx.config;
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [k, v] : c.model.params) params[k] = v;
  nlohmann::json doc = {
      {"grid",
       {{"T", pb.grid().T()},
        {"Nt", pb.grid().Nt()},
        {"Nx", pb.grid().Nx()},
        {"Nz", pb.grid().Nz()},
        {"Zmax", pb.grid().Zmax()},
        {"t0", pb.grid().t0()}}},
      {"model",
       {{"sigma", c.model.sigma},
        {"sigma_prime", c.model.sigma_prime},
        {"cost", c.model.cost},
        {"params", params},
        {"rho0",
         {{"kind", c.model.rho0.kind}, {"center", c.model.rho0.center}, {"width", c.model.rho0.width}}}}},
      {"solver",
       {{"Q", c.solver.Q},
        {"damping", c.solver.damping == Damping::kFixed ? "fixed" : "fictitious_play"},
        {"delta", c.solver.delta},
        {"tol", c.solver.tol},
        {"k_max", c.solver.k_max},
        {"relabel_passes", c.solver.relabel_passes}}},
      {"monotone", {{"pairs", c.monotone.pairs}}},
      {"seed", c.seed},
      {"output", ctx.out.string()},
  };
  if (c.sim) {
    doc["sim"] = {{"N", c.sim->N},
                  {"delta", c.sim->delta},
                  {"replicas", c.sim->replicas},
                  {"deviation", c.sim->deviation},
                  {"ghosts", c.sim->ghosts},
                  {"state_draw", c.sim->state_draw},
                  {"state", c.sim->state}};
  }
  return doc;
}

inline void prepare_output(const RunContext& ctx, const MfgProblem& pb) {
  std::filesystem::create_directories(ctx.out);
  if (!ctx.config_text.empty()) io::write_text(ctx.out / "config.json", ctx.config_text);
  io::write_json(ctx.out / "resolved_config.json", resolved_config(ctx, pb));
}

inline std::vector<double> iota_coords(int n) {
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), 0.0);
  return v;
}

inline std::vector<io::Axis> txz_axes(const Grid& g) {
  io::Axis t{"t", {}}, z{"z", {}}, x{"x", {}};
  for (int k = 0; k < g.Nt(); ++k) t.coordinates.push_back(g.time(k));
  for (int j = 0; j < g.Nz(); ++j) z.coordinates.push_back(g.z(j));
  for (int i = 0; i < g.Nx(); ++i) x.coordinates.push_back(g.x(i));
  return {t, z, x};
}

inline void write_flow(const std::filesystem::path& dir, const std::string& name,
                       const MfgProblem& pb, const PositionFlow& flow) {
  const Grid& g = pb.grid();
  std::vector<double> data;
  data.reserve(flow.states() * flow.levels() * g.Nx());
  for (std::size_t q = 0; q < flow.states(); ++q) {
    for (std::size_t k = 0; k < flow.levels(); ++k) {
      const auto& v = flow.at(q, k).values;
      data.insert(data.end(), v.begin(), v.end());
    }
  }
  const auto axes = txz_axes(g);
  io::write_field(dir, name, data, {{"s", pb.quad().nodes}, axes[0], axes[2]});
}

inline EquilibriumResult solve_logged(const RunContext& ctx, const MfgProblem& pb) {
  return solve_equilibrium(
      pb, PositionFlow::constant(pb.quad().size(), pb.grid().Nt(), pb.rho0()),
      equilibrium_options(ctx.config), [&](int k, double r) {
        *ctx.log << "iteration " << k << " residual " << r << "\n";
      });
}

inline nlohmann::json equilibrium_summary(const MfgProblem& pb, const EquilibriumResult& res,
                                          const RunConfig& c) {
  const HolderReport holder = holder_diagnostics(pb, res.flow);
  return {{"status", res.converged ? "converged" : "non-converged"},
          {"converged", res.converged},
          {"iterations", res.iterations},
          {"final_residual", res.final_residual},
          {"tol", c.solver.tol},
          {"k_max", c.solver.k_max},
          {"max_renormalization_deviation", res.max_renormalization_deviation},
          {"posterior_fallbacks", pb.posterior().fallbacks()},
          {"tau_max_conditional_mass_error", res.tau.max_x_mass_error},
          {"holder_time_constant", holder.time_constant},
          {"holder_state_constant", holder.state_constant},
          {"grid", grid_json(pb.grid())},
          {"cost_model", pb.model().name()},
          {"Q", pb.quad().size()}};
}

inline void write_equilibrium(const RunContext& ctx, const MfgProblem& pb,
                              const EquilibriumResult& res) {
  io::CsvWriter csv(ctx.out / "residuals.csv", {"iteration", "residual"});
  for (std::size_t k = 0; k < res.residuals.size(); ++k) {
    csv.row({static_cast<double>(k), res.residuals[k]});
  }
  csv.close();
  const auto axes = txz_axes(pb.grid());
  io::write_field(ctx.out, "value", res.value.u.data(), axes);
  io::write_field(ctx.out, "control", res.control.alpha.data(), axes);
  io::write_field(ctx.out, "tau", res.tau.tau.data(), axes);
  write_flow(ctx.out, "flow", pb, res.flow);
}

}  // namespace detail

inline int run_solve(const RunContext& ctx) {
  const MfgProblem pb = make_problem(ctx.config);
  detail::prepare_output(ctx, pb);
  const EquilibriumResult res = detail::solve_logged(ctx, pb);
  detail::write_equilibrium(ctx, pb, res);
  io::write_json(ctx.out / "summary.json", detail::equilibrium_summary(pb, res, ctx.config));
  *ctx.log << (res.converged ? "converged" : "non-converged") << " after " << res.iterations
           << " updates, residual " << res.final_residual << "\n";
  if (!res.converged && ctx.strict) return kExitNotConverged;
  return kExitOk;
}

inline int run_validate(const RunContext& ctx) {
  const MfgProblem pb = make_problem(ctx.config);
  detail::prepare_output(ctx, pb);
  ValidationOptions opt;
  opt.seed = ctx.config.seed;
  const ValidationReport rep = run_validation(pb, opt);
  nlohmann::json checks = nlohmann::json::array();
  std::string csv = std::string("# schema_version=") + io::kSchemaVersion +
                    "\ngroup,name,value,comparison,threshold,passed\n";
  for (const auto& c : rep.checks) {
    const std::string cmp = c.at_least ? ">=" : "<=";
    checks.push_back({{"group", c.group},
                      {"name", c.name},
                      {"value", c.value},
                      {"comparison", cmp},
                      {"threshold", c.threshold},
                      {"passed", c.passed}});
    csv += c.group + "," + c.name + "," + io::format_double(c.value) + "," + cmp + "," +
           io::format_double(c.threshold) + "," + (c.passed ? "true" : "false") + "\n";
    *ctx.log << (c.passed ? "PASS " : "FAIL ") << c.group << "/" << c.name << " = " << c.value
             << " (" << cmp << " " << c.threshold << ")\n";
  }
  io::write_text(ctx.out / "validation.csv", csv);
  io::write_json(ctx.out / "validation.json",
                 {{"all_passed", rep.all_passed()}, {"checks", checks},
                  {"grid", detail::grid_json(pb.grid())}});
  return rep.all_passed() ? kExitOk : kExitGateFailed;
}

// E[u(t0, Z_t0, X)] with Z_t0 from its prior-predictive law and X ~ rho0.
inline double prior_value(const MfgProblem& pb, const ValueField& value) {
  const Grid& g = pb.grid();
  const auto phi = signal_cell_density(g, pb.kernel().signal_law_marginal(g.t0()));
  double acc = 0.0;
  for (int j = 0; j < g.Nz(); ++j) {
    for (int i = 0; i < g.Nx(); ++i) acc += value.u(0, j, i) * phi[j] * pb.rho0()[i];
  }
  return acc * g.dz() * g.dx();
}

inline int run_simulate(const RunContext& ctx) {
  if (!ctx.config.sim) throw ConfigError("$.sim", "the simulate subcommand needs a sim block");
  const SimBlock& sb = *ctx.config.sim;
  const MfgProblem pb = make_problem(ctx.config);
  detail::prepare_output(ctx, pb);
  const EquilibriumResult eq = detail::solve_logged(ctx, pb);
  detail::write_equilibrium(ctx, pb, eq);

  SimConfig cfg;
  cfg.N = sb.N;
  cfg.delta = sb.delta;
  cfg.seed = ctx.config.seed;
  cfg.draw = sb.state_draw == "fixed" ? StateDraw::kFixed : StateDraw::kPrior;
  cfg.state = sb.state;
  cfg.policy = &eq.control;
  const SimOutcome outcome = simulate_population(pb, cfg);

  io::CsvWriter costs(ctx.out / "sim_costs.csv", {"player", "cost"});
  for (std::size_t p = 0; p < outcome.costs.size(); ++p) {
    costs.row({static_cast<double>(p), outcome.costs[p]});
  }
  costs.close();
  std::vector<double> rho;
  std::vector<double> times;
  for (std::size_t r = 0; r < outcome.rho.size(); ++r) {
    times.push_back(pb.grid().t0() + static_cast<double>(r) * sb.delta);
    rho.insert(rho.end(), outcome.rho[r].values.begin(), outcome.rho[r].values.end());
  }
  io::write_field(ctx.out, "sim_rho", rho, {{"t", times}, detail::txz_axes(pb.grid())[2]});

  nlohmann::json summary = {
      {"equilibrium", detail::equilibrium_summary(pb, eq, ctx.config)},
      {"state", outcome.state},
      {"N", sb.N},
      {"delta", sb.delta},
      {"rounds", static_cast<int>(outcome.rho.size()) - 1},
      {"mean_cost", outcome.mean_cost},
      {"std_error", outcome.std_error},
      {"prior_value_oracle", prior_value(pb, eq.value)},
  };
  if (sb.replicas >= 2) {
    EpsilonOptions eo;
    eo.replicas = sb.replicas;
    eo.ghosts = sb.ghosts;
    eo.hjb.relabel_passes = ctx.config.solver.relabel_passes;
    SimConfig base = cfg;
    if (sb.deviation == "equilibrium") {
      base.deviation = &eq.control;
      eo.mode = DeviationMode::kSupplied;
    } else {
      eo.mode = DeviationMode::kRealizedBestResponse;
    }
    const EpsilonEstimate eps = estimate_epsilon(pb, base, eo);
    summary["epsilon"] = {{"deviation", sb.deviation},
                          {"epsilon", eps.epsilon},
                          {"half_width_95", eps.half_width},
                          {"std_error", eps.std_error},
                          {"replicas", sb.replicas},
                          {"ghosts", sb.ghosts},
                          {"replica_gains", eps.replica_gains},
                          {"no_profitable_deviation", eps.no_profitable_deviation()}};
    *ctx.log << "epsilon " << eps.epsilon << " +- " << eps.half_width << "\n";
  }
  io::write_json(ctx.out / "sim_summary.json", summary);
  if (!eq.converged && ctx.strict) return kExitNotConverged;
  return kExitOk;
}

inline int run_check_monotone(const RunContext& ctx) {
  const MfgProblem pb = make_problem(ctx.config);
  detail::prepare_output(ctx, pb);
  const auto pairs = density_pairs(pb.grid().Nx(), ctx.config.monotone.pairs, ctx.config.seed);
  const MonotonicityReport rep = monotonicity_check(pb.model(), pairs, pb.quad().nodes);
  io::write_json(ctx.out / "monotone.json", {{"cost_model", pb.model().name()},
                                              {"min_flow", rep.min_flow},
                                              {"min_terminal", rep.min_terminal},
                                              {"evaluations", rep.evaluations},
                                              {"monotone", rep.monotone}});
  *ctx.log << pb.model().name() << (rep.monotone ? " is" : " is not")
           << " monotone on the sampled pairs (min flow " << rep.min_flow << ", min terminal "
           << rep.min_terminal << ")\n";
  return rep.monotone ? kExitOk : kExitGateFailed;
}

}  // namespace mfgsig
