#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "stackel/cli/config.hpp"
#include "stackel/cli/run.hpp"

using namespace stackel;
using namespace stackel::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("stackel_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& dir) {
  const std::string cmd = std::string(STACKEL_CLI_PATH) + " " + args + " > " + (dir / "stdout.txt").string() +
                          " 2> " + (dir / "stderr.txt").string();
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

TEST_CASE("defaults", "[cli]") {
  auto c = parse_config(R"({"model": "meanfield", "action": "equilibrium"})");
  CHECK(c.grid.steps == 2000);
  CHECK(c.monte_carlo.paths == 10000);
  CHECK(c.monte_carlo.seed == 42);
  CHECK(std::get<meanfield::MfgParams>(c.params) == meanfield::MfgParams{});
  auto d = parse_config("{}", Model::discrete, Action::defect);
  CHECK(d.model == Model::discrete);
  CHECK(d.action == Action::defect);
  CHECK_THROWS_AS(parse_config("{}"), ConfigError);
}

TEST_CASE("emit and parse round trip", "[cli]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 3);
  for (Model m : {Model::discrete, Model::dynamic, Model::meanfield}) {
    for (Action a : {Action::equilibrium, Action::defect, Action::threshold_k, Action::verify}) {
      RunConfig c;
      c.model = m;
      c.action = a;
      c.params = default_params(m);
      std::visit(
          [&](auto& p) {
            if constexpr (requires { p.T; }) p.T = u(rng);
            else p.b = u(rng);
          },
          c.params);
      c.grid.steps = 1234;
      c.monte_carlo.paths = 77;
      c.monte_carlo.seed = 9;
      c.monte_carlo.zero_noise = true;
      c.defect.k = u(rng) / 7;
      c.options.form = meanfield::SystemForm::printed;
      CHECK(parse_config(emit_config(c)) == c);
    }
  }
}

TEST_CASE("unknown keys are rejected by name", "[cli]") {
  try {
    parse_config(R"({"model": "dynamic", "params": {"gamma_typo": 0.1}})");
    FAIL("accepted an unknown key");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("gamma_typo") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(R"({"model": "dynamic", "extra": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": "dynamic", "grid": {"step": 10}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": "dynamic", "params": {"r": "fast"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": "dynamic", "monte_carlo": {"paths": -4}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": "dynamic"})", Model::discrete), ConfigError);
}

TEST_CASE("discrete equilibrium report", "[cli]") {
  auto c = parse_config("{}", Model::discrete, Action::equilibrium);
  auto r = run(c);
  CHECK(r.report.value("result.u0") == "5");
  CHECK(r.report.value("result.J0") == "12.5");
  CHECK(r.report.value("config.params.b") == "1");
  CHECK(r.report.all_hold());
  const auto text = r.report.str();
  CHECK(text.find("wall_time_s = ") != std::string::npos);
  CHECK(text.find("warnings.count = ") != std::string::npos);
  CHECK(r.trajectory.rfind("t,", 0) == 0);
}

TEST_CASE("binary: outputs, overrides and exit codes", "[cli]") {
  auto dir = scratch("run");
  const auto cfg = dir / "c.json";
  write_text(cfg.string(), R"({"search": {"periods": 6}})");
  const std::string base = "discrete threshold-k --config " + cfg.string();
  REQUIRE(run_cli(base + " --out " + (dir / "a").string() + " --paths 100000", dir) == 0);
  const auto report = slurp(dir / "a" / "report.txt");
  CHECK(report.find("config.monte_carlo.paths = 100000\n") != std::string::npos);
  CHECK(report == slurp(dir / "stdout.txt"));
  CHECK(slurp(dir / "a" / "sweep.csv").rfind("k,J_star,J_tilde,satisfied\n", 0) == 0);
  REQUIRE(run_cli(base + " --out " + (dir / "b").string() + " --paths 100000", dir) == 0);
  CHECK(slurp(dir / "a" / "trajectory.csv") == slurp(dir / "b" / "trajectory.csv"));
  CHECK(slurp(dir / "a" / "sweep.csv") == slurp(dir / "b" / "sweep.csv"));

  write_text(cfg.string(), R"({"params": {"b": 0}})");
  CHECK(run_cli("discrete equilibrium --config " + cfg.string() + " --out " + dir.string(), dir) == 2);
  CHECK(slurp(dir / "stderr.txt").find("[field: b]") != std::string::npos);

  write_text(cfg.string(), R"({"params": {"gamma_typo": 1}})");
  CHECK(run_cli("dynamic equilibrium --config " + cfg.string(), dir) == 2);
  CHECK(run_cli("dynamic equilibrium", dir) == 2);
  CHECK(run_cli("nonsense equilibrium --config " + cfg.string(), dir) == 2);
  CHECK(run_cli("dynamic equilibrium --config " + (dir / "missing.json").string(), dir) == 2);
  CHECK(run_cli("dynamic equilibrium --config " + cfg.string() + " --paths many", dir) == 2);
}

TEST_CASE("binary: workers come from the environment", "[cli]") {
  auto dir = scratch("env");
  const auto cfg = dir / "c.json";
  write_text(cfg.string(), "{}");
  CHECK(run_cli("discrete equilibrium --config " + cfg.string() + " --out " + dir.string(), dir) == 0);
  CHECK(run_cli("discrete equilibrium --config " + cfg.string() + " --workers 2", dir) == 2);
  setenv("STACKEL_WORKERS", "2", 1);
  CHECK(run_cli("discrete equilibrium --config " + cfg.string() + " --out " + dir.string(), dir) == 0);
  CHECK(slurp(dir / "report.txt").find("workers = 2\n") != std::string::npos);
  setenv("STACKEL_WORKERS", "-1", 1);
  CHECK(run_cli("discrete equilibrium --config " + cfg.string() + " --out " + dir.string(), dir) == 2);
  unsetenv("STACKEL_WORKERS");
}
