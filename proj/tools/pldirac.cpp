// Scenario runner: `pldirac <experiment> --config path [--output dir] [--seed n] [--quiet]`.
#include <iostream>
#include <string>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "pldirac/scenario.hpp"

namespace {

pldirac::json environment() {
  pldirac::json env;
#if defined(__clang__)
  env["compiler"] = "clang " __clang_version__;
#elif defined(__GNUC__)
  env["compiler"] = "gcc " __VERSION__;
#else
  env["compiler"] = "unknown";
#endif
  env["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
  env["cplusplus"] = static_cast<long>(__cplusplus);
  return env;
}

void print_report(const pldirac::RunReport& rep) {
  for (const auto& c : rep.checks.checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  residual=" << pldirac::format_number(c.residual)
              << (c.lower_bound ? "  must exceed " : "  tol=") << pldirac::format_number(c.tolerance) << "\n";
  }
  std::cout << rep.experiment << ": " << (rep.passed() ? "all checks passed" : "some checks FAILED") << " ("
            << rep.checks.checks.size() << " checks, " << rep.wall_seconds << " s)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dirac brackets, Poisson-Lie duality and lattice loop experiments"};
  std::string experiment, config_path, output;
  std::uint64_t seed = 0;
  bool quiet = false;
  std::string names;
  for (const auto& n : pldirac::experiment_names()) names += (names.empty() ? "" : ", ") + n;
  app.add_option("experiment", experiment, "one of: " + names)->required();
  app.add_option("--config", config_path, "scenario config (JSON)")->required();
  app.add_option("--output", output, "output directory (overrides output_dir)");
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides seed)");
  app.add_flag("--quiet", quiet, "print only the final status line");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : pldirac::exit_config_error;
  }

  try {
    pldirac::ScenarioConfig cfg = pldirac::load_config(config_path);
    if (experiment != cfg.experiment) {
      const auto& all = pldirac::experiment_names();
      if (std::find(all.begin(), all.end(), experiment) == all.end())
        throw pldirac::ConfigError("unknown experiment '" + experiment + "'");
      cfg.experiment = experiment;
    }
    if (!output.empty()) cfg.output_dir = output;
    if (*seed_opt) cfg.seed = seed;
    pldirac::Scenario scenario(std::move(cfg));
    pldirac::RunReport rep = pldirac::run_experiment(scenario);
    pldirac::write_reports(scenario, rep, environment());
    if (quiet) {
      std::cout << rep.experiment << ": " << (rep.passed() ? "PASS" : "FAIL") << "\n";
    } else {
      print_report(rep);
    }
    return rep.passed() ? pldirac::exit_pass : pldirac::exit_check_failure;
  } catch (const pldirac::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return pldirac::exit_config_error;
  } catch (const pldirac::PreconditionError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return pldirac::exit_config_error;
  } catch (const pldirac::StructuralError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return pldirac::exit_config_error;
  } catch (const pldirac::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return pldirac::exit_numerical_failure;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return pldirac::exit_config_error;
  }
}
