// Command-line front end: mfgsig <solve|validate|simulate|check-monotone>.
// Flags override MFGSIG_* environment variables, which override the config.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mfgsig/parallel.hpp"
#include "mfgsig/run.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::size_t workers = 0;
  std::uint64_t seed = 0;
  bool strict = false;
};

int dispatch(const std::string& command, const Flags& flags, const CLI::App& app) {
  using namespace mfgsig;
  RunContext ctx;
  if (!flags.config.empty()) {
    ctx.config_text = read_file(flags.config);
    ctx.config = parse_config_text(ctx.config_text);
  }
  if (!app.get_option("--seed")->empty()) ctx.config.seed = flags.seed;
  ctx.out = flags.out.empty() ? ctx.config.output : flags.out;
  ctx.strict = flags.strict;
  set_workers(flags.workers);
  if (command == "solve") return run_solve(ctx);
  if (command == "validate") return run_validate(ctx);
  if (command == "simulate") return run_simulate(ctx);
  return run_check_monotone(ctx);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean field game solver with private signals about a common state"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config, "JSON run configuration")
      ->envname("MFGSIG_CONFIG")
      ->check(CLI::ExistingFile);
  app.add_option("--out", flags.out, "output directory (default: config 'output')")
      ->envname("MFGSIG_OUT");
  app.add_option("--workers", flags.workers, "worker thread cap, 0 = all cores")
      ->envname("MFGSIG_WORKERS");
  app.add_option("--seed", flags.seed, "random seed (overrides config 'seed')")
      ->envname("MFGSIG_SEED");
  app.add_flag("--strict", flags.strict, "exit 4 when the equilibrium iteration does not converge")
      ->envname("MFGSIG_STRICT");
  app.fallthrough();
  for (const char* name : {"solve", "validate", "simulate", "check-monotone"}) {
    app.add_subcommand(name);
  }
  app.get_subcommand("solve")->description("solve for the equilibrium and export fields");
  app.get_subcommand("validate")->description("run the invariant and convergence suite");
  app.get_subcommand("simulate")->description("solve, then simulate the N-player game");
  app.get_subcommand("check-monotone")->description("sample the monotonicity condition");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mfgsig::kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(command, flags, app);
  } catch (const mfgsig::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return mfgsig::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << command << " failed: " << e.what() << "\n";
    return mfgsig::kExitSolver;
  }
}
