// Command-line front end: stackel <model> <action> --config FILE [--out DIR]
// [--seed N] [--paths N] [--steps N]. Worker count comes from STACKEL_WORKERS.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stackel/cli/config.hpp"
#include "stackel/cli/report.hpp"
#include "stackel/cli/run.hpp"
#include "stackel/numerics/monte_carlo.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kNumerical = 3;

int fail(const stackel::Error& e) {
  std::string msg = e.what();
  if (auto* pe = dynamic_cast<const stackel::ParameterError*>(&e); pe && !pe->field().empty())
    msg += " [field: " + pe->field() + "]";
  std::fprintf(stderr, "error (%s): %s\n", e.code().c_str(), msg.c_str());
  return e.error_class() == stackel::ErrorClass::validation ? kValidation : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leader-follower penalty computations"};
  std::string model, action, config_path, out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths, steps;
  app.add_option("model", model, "discrete | dynamic | meanfield")->required();
  app.add_option("action", action, "equilibrium | defect | threshold-k | verify")->required();
  app.add_option("--config", config_path, "JSON configuration file")->required();
  app.add_option("--out", out_dir, "output directory (default: current directory)");
  app.add_option("--seed", seed, "Monte Carlo seed");
  app.add_option("--paths", paths, "Monte Carlo path count");
  app.add_option("--steps", steps, "time grid steps");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    const auto m = stackel::cli::parse_model(model);
    const auto a = stackel::cli::parse_action(action);
    auto cfg = stackel::cli::parse_config(stackel::cli::read_file(config_path), m, a);
    if (seed) cfg.monte_carlo.seed = *seed;
    if (paths) cfg.monte_carlo.paths = *paths;
    if (steps) cfg.grid.steps = *steps;
    const unsigned workers = stackel::default_workers();
    const auto result = stackel::cli::run(cfg, workers);
    stackel::cli::write_outputs(result, out_dir);
    std::fputs(result.report.str().c_str(), stdout);
    return kOk;
  } catch (const stackel::Error& e) {
    return fail(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error (io): %s\n", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumerical;
  }
}
