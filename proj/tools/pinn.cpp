#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "pinn/cli.hpp"
#include "pinn/problems.hpp"
#include "pinn/reference.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kConfigError = 2;
constexpr int kDiverged = 3;

// A bare preset name resolves against the shipped preset directory.
fs::path resolve_config(const std::string& arg) {
  if (fs::exists(arg)) return arg;
  const auto preset = pinn::preset_directory() / (arg + ".ini");
  if (fs::exists(preset)) return preset;
  return arg;
}

int do_run(const std::string& config_arg, const std::string& out, bool full, bool quiet, std::size_t every) {
  pinn::ExperimentConfig config;
  try {
    config = pinn::load_config(resolve_config(config_arg));
  } catch (const pinn::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  pinn::RunOptions options;
  options.full = full;
  options.quiet = quiet;
  options.progress_every = every;
  const auto result = pinn::run_experiment(config, out, options, std::cerr);
  std::cout << result.directory.string() << "\n";
  if (result.train.reason == pinn::Termination::Diverged) {
    std::cerr << "error: training diverged at epoch " << result.train.history.size() << "\n";
    return kDiverged;
  }
  return 0;
}

int do_report(const std::vector<std::string>& dirs, double tol, const std::string& csv, const std::string& ocp_csv) {
  std::vector<fs::path> paths(dirs.begin(), dirs.end());
  const auto report = pinn::make_report(paths, tol > 0.0 ? std::optional<double>(tol) : std::nullopt);
  pinn::write_report_text(std::cout, report);
  if (!csv.empty()) {
    std::ofstream os(csv);
    pinn::write_report_csv(os, report);
  }
  if (!ocp_csv.empty() && !report.ocp.empty()) {
    std::ofstream os(ocp_csv);
    pinn::write_ocp_csv(os, report);
  }
  return 0;
}

int do_oracle(const std::string& name, const std::vector<double>& mu, std::size_t n, const std::string& out) {
  const auto& problem = pinn::find_problem(name);
  if (mu.size() != problem.parameters.dim()) {
    std::cerr << "error: " << name << " takes " << problem.parameters.dim() << " parameter values, got " << mu.size()
              << "\n";
    return kConfigError;
  }
  const auto sol = pinn::solve_reference(problem, mu, n);
  if (out.empty()) {
    pinn::write_csv(std::cout, sol);
  } else {
    std::ofstream os(out);
    pinn::write_csv(os, sol);
  }
  return 0;
}

int do_check(const std::string& presets) {
  const auto results = pinn::run_checks(presets.empty() ? pinn::preset_directory() : fs::path(presets));
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS  " : "FAIL  ") << r.name << "  (" << r.detail << ")\n";
    all = all && r.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-informed neural network surrogates for parametric PDEs and optimal control"};
  app.require_subcommand(1);

  std::string config, out;
  bool full = false, quiet = false;
  std::size_t every = 1000;
  auto* run = app.add_subcommand("run", "Train the model described by a config file or shipped preset name");
  run->add_option("config", config, "Config file or preset name")->required();
  run->add_option("-o,--out", out, "Run directory (defaults to the config's output)");
  run->add_flag("--full", full, "Apply the [full] section (long tolerance-driven run)");
  run->add_flag("-q,--quiet", quiet, "No progress output");
  run->add_option("--progress", every, "Progress line every N epochs")->check(CLI::PositiveNumber);

  std::vector<std::string> dirs;
  double tol = 0.0;
  std::string csv, ocp_csv;
  auto* report = app.add_subcommand("report", "Compare finished runs of one problem");
  report->add_option("runs", dirs, "Run directories")->required()->check(CLI::ExistingDirectory);
  report->add_option("--tol", tol, "Loss tolerance for epochs-to-tolerance (default: the run's loss_tol or 1e-3)");
  report->add_option("--csv", csv, "Write the comparison table as CSV");
  report->add_option("--ocp-csv", ocp_csv, "Write the (0,0) table of ocp_poisson runs as CSV");

  std::string problem;
  std::vector<double> mu;
  std::size_t n = 129;
  std::string oracle_out;
  auto* oracle = app.add_subcommand("oracle", "Dump the finite-difference reference of a problem");
  oracle->add_option("problem", problem, "Problem name")->required();
  oracle->add_option("mu", mu, "Parameter values");
  oracle->add_option("-n,--nodes", n, "Nodes per axis")->check(CLI::Range(9, 2049));
  oracle->add_option("-o,--out", oracle_out, "CSV file (default: stdout)");

  std::string presets;
  auto* check = app.add_subcommand("check", "Run the invariant self-test suite");
  check->add_option("--presets", presets, "Preset directory to validate");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return do_run(config, out, full, quiet, every);
    if (*report) return do_report(dirs, tol, csv, ocp_csv);
    if (*oracle) return do_oracle(problem, mu, n, oracle_out);
    if (*check) return do_check(presets);
  } catch (const pinn::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
