#pragma once
/**
 * @file training.hpp
 * @brief Surrogate models, loss assembly over collocation sets and the Adam
 * training loop.
 */

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pinn/autodiff.hpp"
#include "pinn/features.hpp"
#include "pinn/piarch.hpp"
#include "pinn/problems.hpp"
#include "pinn/sampling.hpp"

namespace pinn {

struct ModelConfig {
  std::string architecture = "flat";  // flat | pi_arch
  bool learned_relation = false;      // pi_arch: approximate each relation with a network
  std::vector<std::size_t> relation_hidden = {10};
  std::vector<std::size_t> hidden;
  Activation activation = Activation::Softplus;
  std::uint64_t seed = 0;
  std::vector<FeatureDef> features;
};

/**
 * Fields of a problem as expressions of the raw inputs (coordinates, then
 * parameters). Trainable parameters are the network weights followed by the
 * learnable feature parameters.
 */
class Surrogate {
 public:
  using Builder = std::function<std::vector<ad::Expr>(ad::Graph&, std::span<const ad::Expr> raw)>;

  Surrogate(const Problem& problem, const ModelConfig& config);
  /// Fixed model with no trainable parameters, e.g. a closed form.
  Surrogate(const Problem& problem, const Builder& builder);

  Surrogate(const Surrogate&) = delete;
  Surrogate& operator=(const Surrogate&) = delete;

  const Problem& problem() const { return *problem_; }
  ad::Graph& graph() const { return *graph_; }
  const std::vector<std::string>& raw_names() const { return raw_names_; }
  std::span<const ad::VarId> input_vars() const { return std::span(raw_vars_).first(problem_->domain.dim()); }
  std::span<const ad::VarId> param_vars() const { return std::span(raw_vars_).subspan(problem_->domain.dim()); }
  std::span<const ad::VarId> raw_vars() const { return raw_vars_; }
  const std::vector<ad::Expr>& fields() const { return fields_; }

  std::size_t parameter_count() const { return theta_.size(); }
  std::span<const double> parameters() const { return theta_; }
  std::span<const ad::VarId> parameter_vars() const { return trainable_; }
  void set_parameters(std::span<const double> values);
  /// Number of leading parameters that belong to the networks.
  std::size_t network_parameter_count() const { return network_params_; }

  const ComposedModel* model() const { return model_ ? &*model_ : nullptr; }
  const FeatureSet& features() const { return features_; }

  /// All fields at `count` points (row-major `points`, domain dim each) for
  /// one parameter value; result is count x fields, row-major.
  std::vector<double> predict(std::span<const double> points, std::span<const double> mu) const;
  std::vector<double> predict_point(std::span<const double> x, std::span<const double> mu) const;

 private:
  void finish();

  const Problem* problem_;
  std::unique_ptr<ad::Graph> graph_;
  std::vector<std::string> raw_names_;
  std::vector<ad::VarId> raw_vars_;
  FeatureSet features_;
  std::optional<ComposedModel> model_;
  std::vector<ad::Expr> fields_;
  std::vector<ad::VarId> trainable_;
  std::vector<double> theta_;
  std::size_t network_params_ = 0;
  std::unique_ptr<ad::Program> predictor_;
};

struct SamplingConfig {
  std::size_t n_interior = 100;
  SamplerKind interior = SamplerKind::Grid;
  std::size_t n_boundary = 40;
  SamplerKind boundary = SamplerKind::Grid;
  std::size_t n_parameter = 1;
  SamplerKind parameter = SamplerKind::Grid;
  std::uint64_t seed = 0;
};

struct LossSpec {
  const Problem* problem = nullptr;
  PointSet interior;
  std::vector<PointSet> boundary;       // one per boundary condition
  std::vector<std::vector<double>> mu;  // one empty sample for non-parametric problems

  void validate() const;
};

LossSpec make_loss_spec(const Problem& problem, const SamplingConfig& sampling);

struct LossValue {
  double mse_b = 0.0;
  double mse_p = 0.0;
  double total = 0.0;
  std::vector<double> per_equation;  // averaged over parameter samples
  std::vector<double> per_condition;
};

/// Compiled loss terms for one surrogate and one collocation layout.
class LossEngine {
 public:
  LossEngine(const Surrogate& model, const LossSpec& spec, std::size_t lanes = 32);

  /**
   * Global loss at `theta`: mean over `mu` of (boundary loss + residual loss).
   * Fills `grad` (resized to theta.size()) when given.
   */
  LossValue evaluate(std::span<const double> theta, const std::vector<std::vector<double>>& mu,
                     std::vector<double>* grad = nullptr);
  LossValue evaluate(std::span<const double> theta, std::vector<double>* grad = nullptr) {
    return evaluate(theta, spec_->mu, grad);
  }

 private:
  struct Term {
    std::unique_ptr<ad::Program> program;
    std::unique_ptr<ad::Workspace> work;
    const PointSet* points;
    std::size_t components;
  };
  void run_term(Term& term, std::span<const double> theta, const std::vector<std::vector<double>>& mu,
                double weight, std::vector<double>& parts, std::vector<double>* grad);

  const Surrogate* model_;
  const LossSpec* spec_;
  std::size_t lanes_;
  Term interior_;
  std::vector<Term> conditions_;
};

double boundary_loss(const Surrogate& model, const LossSpec& spec, std::span<const double> mu);
double residual_loss(const Surrogate& model, const LossSpec& spec, std::span<const double> mu);
double global_loss(const Surrogate& model, const LossSpec& spec);

/// Per point, the largest |mismatch component| of one boundary condition.
std::vector<double> condition_mismatch(const Surrogate& model, std::size_t condition, std::span<const double> points,
                                       std::span<const double> mu);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamState(std::size_t n = 0, double learning_rate = 1e-3) : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

struct EpochRecord {
  std::size_t epoch;
  double mse_b;
  double mse_p;
  double total;
  double wall_ms;
};

enum class Termination { MaxEpochs, LossTolerance, Diverged };
std::string to_string(Termination t);

struct TrainOptions {
  double learning_rate = 1e-3;
  std::size_t max_epochs = 1000;
  double loss_tol = 0.0;  // <= 0 disables the threshold
  bool record_time = false;
  std::size_t lanes = 32;
  /// Called after every recorded epoch; return false to stop.
  std::function<bool(const EpochRecord&)> on_epoch;
};

struct TrainRun {
  std::vector<EpochRecord> history;
  Termination reason = Termination::MaxEpochs;
  std::vector<double> final_parameters;
  LossValue final_loss;
  std::optional<std::size_t> epoch_reached_tol;
  double wall_ms = 0.0;
};

/**
 * Full-batch Adam. Epoch e records the loss of the parameters before the
 * e-th update; training stops after max_epochs updates, when the recorded
 * total reaches loss_tol, or on a non-finite loss. The surrogate holds the
 * final parameters afterwards (the last finite ones on divergence).
 */
TrainRun train(Surrogate& model, const LossSpec& spec, const TrainOptions& options);

/// CSV: epoch,mse_b,mse_p,total,wall_ms with values printed as %.17g.
void write_history_csv(std::ostream& os, const TrainRun& run);

}  // namespace pinn
