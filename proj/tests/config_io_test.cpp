#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>
#include <json.hpp>

#include "support.hpp"

namespace mfgsig {
namespace {

namespace fs = std::filesystem;

std::string error_path(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

TEST(Config, DefaultsAndDerivedSignalBound) {
  const RunConfig c = parse_config_text("{}");
  EXPECT_EQ(c.grid.Nt, 100);
  EXPECT_EQ(c.solver.Q, 16);
  EXPECT_FALSE(c.sim.has_value());
  const auto quad = make_state_quadrature(c.solver.Q);
  const Grid g = make_grid(c, quad);
  EXPECT_DOUBLE_EQ(g.Zmax(), quad.max_abs_node() * 1.0 + 4.0);
  EXPECT_DOUBLE_EQ(g.t0(), 0.01);
}

TEST(Config, ReadsEveryBlock) {
  const RunConfig c = parse_config_text(R"({
    "schema_version": "1", "seed": 9, "output": "o",
    "grid": {"T": 2.0, "Nt": 40, "Nx": 32, "Nz": 48, "Zmax": 9.0, "t0": 0.1},
    "model": {"sigma": 0.5, "sigma_prime": 0.3, "cost": "crowd_aversion",
              "params": {"crowd_weight": 2.0}, "rho0": {"kind": "bump", "center": 0.3, "width": 0.05}},
    "solver": {"Q": 8, "damping": "fictitious_play", "delta": 0.4, "tol": 1e-5, "k_max": 50},
    "sim": {"N": 100, "delta": 0.05, "replicas": 4, "deviation": "equilibrium", "ghosts": 10},
    "monotone": {"pairs": 7}})");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(*c.grid.Zmax, 9.0);
  EXPECT_EQ(c.model.params.at("crowd_weight"), 2.0);
  EXPECT_EQ(c.solver.damping, Damping::kFictitiousPlay);
  EXPECT_EQ(c.sim->ghosts, 10);
  EXPECT_EQ(c.monotone.pairs, 7);
  const MfgProblem pb = make_problem(c);
  EXPECT_EQ(pb.model().name(), "crowd_aversion");
  EXPECT_NEAR(pb.rho0().mass(), 1.0, 1e-14);
}

TEST(Config, ErrorsCarryFieldPaths) {
  EXPECT_EQ(error_path("[1]"), "$");
  EXPECT_EQ(error_path("{"), "$");
  EXPECT_EQ(error_path(R"({"grdi": {}})"), "$.grdi");
  EXPECT_EQ(error_path(R"({"grid": {"Nx": 4}})"), "$.grid.Nx");
  EXPECT_EQ(error_path(R"({"grid": {"Nx": 32.5}})"), "$.grid.Nx");
  EXPECT_EQ(error_path(R"({"grid": {"T": "one"}})"), "$.grid.T");
  EXPECT_EQ(error_path(R"({"grid": {"t0": 2.0}})"), "$.grid.t0");
  EXPECT_EQ(error_path(R"({"model": {"cost": "nope"}})"), "$.model.cost");
  EXPECT_EQ(error_path(R"({"model": {"params": {"crowd_weigth": 1}}})"),
            "$.model.params.crowd_weigth");
  EXPECT_EQ(error_path(R"({"model": {"rho0": {"kind": "spike"}}})"), "$.model.rho0.kind");
  EXPECT_EQ(error_path(R"({"solver": {"damping": "heavy"}})"), "$.solver.damping");
  EXPECT_EQ(error_path(R"({"solver": {"delta": 0}})"), "$.solver.delta");
  EXPECT_EQ(error_path(R"({"sim": {"delta": 0.013}})"), "$.sim.delta");
  EXPECT_EQ(error_path(R"({"sim": {"replicas": 1}})"), "$.sim.replicas");
  EXPECT_EQ(error_path(R"({"seed": -3})"), "$.seed");
  EXPECT_EQ(error_path(R"({"schema_version": "2"})"), "$.schema_version");
  EXPECT_THROW(read_file("/nonexistent/config.json"), ConfigError);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mfgsig_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

using Io = TempDir;

TEST_F(Io, FieldDumpRoundTrip) {
  std::vector<double> data(2 * 3 * 4);
  for (std::size_t n = 0; n < data.size(); ++n) data[n] = 0.1 * static_cast<double>(n) - 1.0;
  io::write_field(dir_, "f", data, {{"a", {0, 1}}, {"b", {5, 6, 7}}, {"c", {0.1, 0.2, 0.3, 0.4}}});
  const auto header = nlohmann::json::parse(slurp(dir_ / "f.json"));
  EXPECT_EQ(header["schema_version"], "1");
  EXPECT_EQ(header["shape"], nlohmann::json::array({2, 3, 4}));
  EXPECT_EQ(header["axes"], nlohmann::json::array({"a", "b", "c"}));
  EXPECT_EQ(header["dtype_width"], 8);
  EXPECT_EQ(header["order"], "row-major");
  const std::string bin = slurp(dir_ / "f.bin");
  ASSERT_EQ(bin.size(), data.size() * 8);
  std::vector<double> back(data.size());
  std::memcpy(back.data(), bin.data(), bin.size());
  EXPECT_EQ(back, data);
  // CSV mirror: schema line, header, then rows in row-major order.
  std::ifstream csv(dir_ / "f.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "# schema_version=1");
  std::getline(csv, line);
  EXPECT_EQ(line, "a,b,c,value");
  std::getline(csv, line);
  EXPECT_EQ(line, "0,5,0.1,-1");
  std::getline(csv, line);
  EXPECT_EQ(line, "0,5,0.2,-0.9");
  EXPECT_THROW(io::write_field(dir_, "g", {1.0}, {{"a", {0, 1}}}), std::invalid_argument);
}

TEST_F(Io, LargeFieldsSkipTheCsvMirror) {
  io::write_field(dir_, "big", std::vector<double>(10, 0.0), {{"a", std::vector<double>(10, 0.0)}}, 5);
  EXPECT_FALSE(fs::exists(dir_ / "big.csv"));
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir_ / "big.json"))["csv_mirror"].is_null());
}

TEST(Format, DoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) {
    EXPECT_EQ(std::stod(io::format_double(v)), v);
  }
}

using RunCommands = TempDir;

RunContext small_context(const fs::path& out) {
  RunContext ctx;
  ctx.config = parse_config_text(R"({"grid": {"Nt": 20, "Nx": 16, "Nz": 24}, "solver": {"Q": 6},
    "sim": {"N": 60, "delta": 0.05, "replicas": 2, "ghosts": 10}})");
  ctx.config_text = "{\"verbatim\": true}";
  ctx.out = out;
  static std::ostringstream sink;
  ctx.log = &sink;
  return ctx;
}

TEST_F(RunCommands, SolveWritesSchemaVersionedArtifacts) {
  const RunContext ctx = small_context(dir_);
  EXPECT_EQ(run_solve(ctx), kExitOk);
  EXPECT_EQ(slurp(dir_ / "config.json"), "{\"verbatim\": true}");
  for (const char* f : {"summary.json", "resolved_config.json", "value.json", "control.json",
                        "tau.json", "flow.json"}) {
    EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / f))["schema_version"], "1") << f;
  }
  EXPECT_EQ(slurp(dir_ / "residuals.csv").rfind("# schema_version=1\n", 0), 0u);
  const auto summary = nlohmann::json::parse(slurp(dir_ / "summary.json"));
  EXPECT_EQ(summary["status"], "converged");
  const auto value = nlohmann::json::parse(slurp(dir_ / "value.json"));
  EXPECT_EQ(value["shape"], nlohmann::json::array({20, 24, 16}));
  EXPECT_EQ(fs::file_size(dir_ / "value.bin"), 20u * 24 * 16 * 8);
  // The resolved config is itself a valid input that reproduces the run.
  RunContext again = small_context(dir_ / "again");
  again.config = parse_config_text(slurp(dir_ / "resolved_config.json"));
  EXPECT_EQ(run_solve(again), kExitOk);
  EXPECT_EQ(slurp(dir_ / "value.bin"), slurp(dir_ / "again" / "value.bin"));
  EXPECT_EQ(slurp(dir_ / "flow.bin"), slurp(dir_ / "again" / "flow.bin"));
}

TEST_F(RunCommands, StrictModeFlagsNonConvergence) {
  RunContext ctx = small_context(dir_);
  ctx.config.solver.k_max = 0;
  EXPECT_EQ(run_solve(ctx), kExitOk);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "summary.json"))["status"], "non-converged");
  ctx.strict = true;
  EXPECT_EQ(run_solve(ctx), kExitNotConverged);
}

TEST_F(RunCommands, SimulateAndMonotoneReports) {
  RunContext ctx = small_context(dir_);
  EXPECT_EQ(run_simulate(ctx), kExitOk);
  const auto s = nlohmann::json::parse(slurp(dir_ / "sim_summary.json"));
  EXPECT_EQ(s["epsilon"]["replicas"], 2);
  EXPECT_TRUE(fs::exists(dir_ / "sim_rho.bin"));
  EXPECT_EQ(run_check_monotone(ctx), kExitGateFailed);  // product differentiation
  ctx.config.model.cost = "crowd_aversion";
  EXPECT_EQ(run_check_monotone(ctx), kExitOk);
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir_ / "monotone.json"))["monotone"].get<bool>());
  ctx.config.sim.reset();
  EXPECT_THROW(run_simulate(ctx), ConfigError);
}

}  // namespace
}  // namespace mfgsig
