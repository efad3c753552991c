#pragma once
/**
 * @file cli.hpp
 * @brief Experiment configs, the run/report/oracle/check verbs and their
 * on-disk artifacts.
 *
 * Config files are sectioned `key = value` text:
 *
 *   [experiment]  problem, seed, output
 *   [model]       architecture, hidden, activation, feature, feature_expr,
 *                 learned_relation, relation_hidden
 *   [sampling]    interior, n_interior, boundary, n_boundary, parameter,
 *                 n_parameter, seed
 *   [training]    learning_rate, max_epochs, loss_tol, record_time, lanes
 *   [evaluation]  grid, mu (repeatable), reference_n
 *   [full]        max_epochs, loss_tol (applied by `run --full`)
 *
 * Unset keys take the problem's defaults. `#` and `;` start comments.
 */

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pinn/training.hpp"

namespace pinn {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ExperimentConfig {
  std::string problem;
  std::uint64_t seed = 0;
  std::string output;

  std::string architecture = "flat";
  std::vector<std::size_t> hidden;
  Activation activation = Activation::Softplus;
  std::vector<std::string> feature_presets;
  std::vector<FeatureDef> feature_exprs;
  bool learned_relation = false;
  std::vector<std::size_t> relation_hidden = {10};

  SamplingConfig sampling;

  double learning_rate = 1e-3;
  std::size_t max_epochs = 1000;
  double loss_tol = 0.0;
  bool record_time = false;
  std::size_t lanes = 32;

  std::size_t eval_grid = 50;
  std::vector<std::vector<double>> eval_mu;
  std::size_t reference_n = 129;

  std::optional<std::size_t> full_max_epochs;
  std::optional<double> full_loss_tol;

  const Problem& problem_ref() const { return find_problem(problem); }
  ModelConfig model_config() const;
  std::vector<FeatureDef> features() const;
  TrainOptions train_options() const;
  /// Replaces max_epochs / loss_tol by the [full] values.
  void apply_full();
};

/// Defaults of a catalog problem, as a config would resolve them.
ExperimentConfig default_config(const Problem& problem);

/// Throws ConfigError naming `source` and the offending line.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully resolved config; parsing it back yields the same config.
void write_config(std::ostream& os, const ExperimentConfig& config);

struct EvaluationResult {
  std::vector<double> mu;
  std::vector<std::string> error_fields;  // fields with a reference
  std::vector<double> max_error;          // per error field
  std::vector<double> mean_error;
  std::optional<double> relation_violation;
  std::vector<double> condition_max_mismatch;  // per boundary condition
};

struct RunResult {
  std::filesystem::path directory;
  TrainRun train;
  std::vector<EvaluationResult> evaluations;
};

struct RunOptions {
  bool full = false;
  bool quiet = true;
  /// Progress line every `progress_every` epochs when not quiet.
  std::size_t progress_every = 1000;
};

/**
 * Trains the configured model and writes config.ini, loss.csv, params.json,
 * summary.json, prediction_<k>.csv per evaluation parameter and error_<k>.csv
 * where a closed form or finite-difference reference exists. `out` overrides
 * the configured output directory.
 */
RunResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out, const RunOptions& options,
                         std::ostream& log);

/// Rebuilds the trained surrogate of a run directory.
std::unique_ptr<Surrogate> load_surrogate(const std::filesystem::path& run_dir, ExperimentConfig* config = nullptr);

struct ReportRow {
  std::string run;
  std::string architecture;
  double final_loss = 0.0;
  std::size_t epochs = 0;
  std::optional<std::size_t> epochs_to_tol;
  std::optional<double> max_error;
  std::optional<double> mean_error;
  std::optional<double> relation_violation;
};

struct OcpPointRow {
  std::string run;
  double mu1 = 0.0, mu2 = 0.0;
  double y = 0.0, y_ref = 0.0, u = 0.0, u_ref = 0.0;
};

struct Report {
  std::string problem;
  double tolerance = 0.0;
  std::vector<ReportRow> rows;
  std::vector<OcpPointRow> ocp;  // ocp_poisson only
};

/// Throws std::invalid_argument when the runs do not share a problem.
Report make_report(const std::vector<std::filesystem::path>& run_dirs, std::optional<double> tolerance = std::nullopt);
void write_report_text(std::ostream& os, const Report& report);
void write_report_csv(std::ostream& os, const Report& report);
void write_ocp_csv(std::ostream& os, const Report& report);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast invariant self-tests (gradients, exact-solution losses, oracle
/// convergence, preset validity, reproducibility).
std::vector<CheckResult> run_checks(const std::filesystem::path& preset_dir);

/// Location of the shipped presets (compiled in, overridable by PINN_PRESETS).
std::filesystem::path preset_directory();

}  // namespace pinn
