#include "pinn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "pinn/rng.hpp"

namespace pinn {

Surrogate::Surrogate(const Problem& problem, const ModelConfig& config)
    : problem_(&problem), graph_(std::make_unique<ad::Graph>()) {
  raw_names_ = problem.input_names();
  for (const auto& n : problem.parameter_names()) raw_names_.push_back(n);
  std::vector<ad::Expr> raw;
  for (const auto& n : raw_names_) {
    raw.push_back(graph_->variable(n));
    raw_vars_.push_back(graph_->var_id(raw.back()));
  }
  features_ = FeatureSet(*graph_, config.features, raw_names_);
  const auto net_inputs = features_.augment(raw);

  std::vector<RelationXi> relations;
  if (config.architecture == "pi_arch") {
    if (problem.relations.empty()) {
      throw std::invalid_argument("architecture pi_arch needs a problem with an optimality relation; '" +
                                  problem.name + "' has none");
    }
    relations = problem_relations(problem, config.learned_relation, config.seed, config.relation_hidden,
                                  config.activation);
  } else if (config.architecture != "flat") {
    throw std::invalid_argument("unknown architecture '" + config.architecture + "' (expected flat or pi_arch)");
  }
  auto base_fields = base_fields_for(problem, relations);
  const NetworkSpec spec{net_inputs.size(), config.hidden, base_fields.size(), config.activation, config.seed};
  model_ = ComposedModel::compose(spec, std::move(base_fields), std::move(relations), problem.fields, raw_names_,
                                  *graph_);
  fields_ = model_->forward_graph(net_inputs, raw);

  trainable_ = model_->parameter_vars();
  theta_ = model_->parameters();
  network_params_ = theta_.size();
  for (const auto& [var, init] : features_.feature_params()) {
    trainable_.push_back(var);
    theta_.push_back(init);
  }
  finish();
}

Surrogate::Surrogate(const Problem& problem, const Builder& builder)
    : problem_(&problem), graph_(std::make_unique<ad::Graph>()) {
  raw_names_ = problem.input_names();
  for (const auto& n : problem.parameter_names()) raw_names_.push_back(n);
  std::vector<ad::Expr> raw;
  for (const auto& n : raw_names_) {
    raw.push_back(graph_->variable(n));
    raw_vars_.push_back(graph_->var_id(raw.back()));
  }
  fields_ = builder(*graph_, raw);
  if (fields_.size() != problem.fields.size()) {
    throw std::invalid_argument("Surrogate: builder returned " + std::to_string(fields_.size()) + " fields, " +
                                problem.name + " has " + std::to_string(problem.fields.size()));
  }
  finish();
}

void Surrogate::finish() {
  std::vector<ad::VarId> inputs = raw_vars_;
  inputs.insert(inputs.end(), trainable_.begin(), trainable_.end());
  predictor_ = std::make_unique<ad::Program>(fields_, inputs, raw_vars_.size());
}

void Surrogate::set_parameters(std::span<const double> values) {
  if (values.size() != theta_.size()) {
    throw std::invalid_argument("Surrogate: expected " + std::to_string(theta_.size()) + " parameters, got " +
                                std::to_string(values.size()));
  }
  theta_.assign(values.begin(), values.end());
  if (model_) model_->set_parameters(values.first(network_params_));
}

std::vector<double> Surrogate::predict(std::span<const double> points, std::span<const double> mu) const {
  const std::size_t d = problem_->domain.dim();
  if (mu.size() != problem_->parameters.dim()) throw std::invalid_argument("predict: parameter arity mismatch");
  if (points.size() % d != 0) throw std::invalid_argument("predict: point array is not a multiple of the dimension");
  const std::size_t count = points.size() / d;
  const std::size_t nf = fields_.size();
  std::vector<double> out(count * nf);
  if (count == 0) return out;

  const std::size_t lanes = std::min<std::size_t>(count, 64);
  ad::Workspace ws(*predictor_, lanes);
  for (std::size_t i = 0; i < mu.size(); ++i) ws.set_uniform(d + i, mu[i]);
  for (std::size_t i = 0; i < theta_.size(); ++i) ws.set_uniform(raw_vars_.size() + i, theta_[i]);
  std::vector<double> buf(lanes);
  for (std::size_t start = 0; start < count; start += lanes) {
    const std::size_t active = std::min(lanes, count - start);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t l = 0; l < lanes; ++l) buf[l] = points[(start + std::min(l, active - 1)) * d + a];
      ws.set_lanes(a, buf);
    }
    ws.forward();
    for (std::size_t l = 0; l < active; ++l) {
      for (std::size_t f = 0; f < nf; ++f) out[(start + l) * nf + f] = ws.root(f, l);
    }
  }
  return out;
}

std::vector<double> Surrogate::predict_point(std::span<const double> x, std::span<const double> mu) const {
  return predict(x, mu);
}

void LossSpec::validate() const {
  if (!problem) throw std::invalid_argument("LossSpec: no problem");
  if (interior.size() == 0) throw std::invalid_argument("LossSpec: empty interior set");
  if (boundary.size() != problem->boundary_conditions.size()) {
    throw std::invalid_argument("LossSpec: one boundary set per condition required");
  }
  for (std::size_t l = 0; l < boundary.size(); ++l) {
    if (boundary[l].size() == 0) {
      throw std::invalid_argument("LossSpec: boundary condition '" + problem->boundary_conditions[l].name +
                                  "' has no points");
    }
  }
  if (mu.empty()) throw std::invalid_argument("LossSpec: no parameter samples");
  for (const auto& m : mu) {
    if (m.size() != problem->parameters.dim()) throw std::invalid_argument("LossSpec: parameter sample arity");
  }
}

namespace {

PointSet uniform_interior(const Box& box, std::size_t n, std::uint64_t seed) {
  PointSet out{box, "uniform_random", seed, box.dim(), {}, {}};
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& a : box.axes()) out.coords.push_back(rng.uniform(a.low, a.high));
  }
  return out;
}

PointSet interior_points(const Box& box, std::size_t n, SamplerKind kind, std::uint64_t seed) {
  switch (kind) {
    case SamplerKind::Grid: {
      const auto counts = balanced_factors(n, box.dim());
      return interior_grid(box, counts);
    }
    case SamplerKind::LatinHypercube:
      return latin_hypercube(box, n, seed);
    case SamplerKind::UniformRandom:
      return uniform_interior(box, n, seed);
  }
  throw std::logic_error("unreachable sampler kind");
}

}  // namespace

LossSpec make_loss_spec(const Problem& problem, const SamplingConfig& s) {
  SplitMix64 seeds(s.seed);
  const auto interior_seed = seeds.next();
  const auto boundary_seed = seeds.next();
  const auto parameter_seed = seeds.next();

  LossSpec spec;
  spec.problem = &problem;
  spec.interior = interior_points(problem.domain, s.n_interior, s.interior, interior_seed);
  const auto mode = s.boundary == SamplerKind::Grid ? BoundaryMode::Equispaced : BoundaryMode::UniformRandom;
  const auto all = boundary_sample(problem.domain, s.n_boundary, mode, boundary_seed, problem.boundary_facets());
  for (const auto& bc : problem.boundary_conditions) spec.boundary.push_back(all.restricted(bc.facets));

  if (problem.parameters.empty()) {
    spec.mu = {{}};
  } else {
    const auto pts = s.parameter == SamplerKind::Grid ? parameter_grid(problem.parameters, s.n_parameter)
                                                      : interior_points(problem.parameters, s.n_parameter,
                                                                        s.parameter, parameter_seed);
    for (std::size_t i = 0; i < pts.size(); ++i) spec.mu.emplace_back(pts.point(i).begin(), pts.point(i).end());
  }
  spec.validate();
  return spec;
}

LossEngine::LossEngine(const Surrogate& model, const LossSpec& spec, std::size_t lanes)
    : model_(&model), spec_(&spec), lanes_(lanes) {
  spec.validate();
  if (spec.problem != &model.problem()) throw std::invalid_argument("LossEngine: surrogate and spec disagree");
  if (lanes == 0) throw std::invalid_argument("LossEngine: lanes must be positive");
  const auto& problem = model.problem();
  auto& g = model.graph();

  std::vector<ad::VarId> inputs(model.raw_vars().begin(), model.raw_vars().end());
  inputs.insert(inputs.end(), model.parameter_vars().begin(), model.parameter_vars().end());

  auto make_term = [&](const std::vector<ad::Expr>& parts, const PointSet& points) {
    std::vector<ad::Expr> squares;
    for (const auto& e : parts) squares.push_back(ad::square(e));
    std::vector<ad::Expr> roots = {g.sum(squares)};
    roots.insert(roots.end(), squares.begin(), squares.end());
    Term t;
    t.program = std::make_unique<ad::Program>(roots, inputs, model.raw_vars().size());
    t.work = std::make_unique<ad::Workspace>(*t.program, lanes_);
    t.points = &points;
    t.components = parts.size();
    return t;
  };

  const auto residuals = residual_exprs(problem, model.fields(), model.input_vars(), model.param_vars());
  interior_ = make_term(residuals, spec.interior);
  const FieldContext ctx(model.fields(), model.input_vars(), model.param_vars());
  for (std::size_t l = 0; l < problem.boundary_conditions.size(); ++l) {
    conditions_.push_back(make_term(problem.boundary_conditions[l].mismatch(ctx), spec.boundary[l]));
  }
}

void LossEngine::run_term(Term& term, std::span<const double> theta, const std::vector<std::vector<double>>& mu,
                          double weight, std::vector<double>& parts, std::vector<double>* grad) {
  auto& ws = *term.work;
  const std::size_t d = model_->input_vars().size();
  const std::size_t np = model_->param_vars().size();
  const std::size_t raw = d + np;
  const std::size_t n = term.points->size();
  const std::size_t total = n * mu.size();
  const std::size_t L = lanes_;

  for (std::size_t i = 0; i < theta.size(); ++i) ws.set_uniform(raw + i, theta[i]);
  parts.assign(term.components, 0.0);
  std::vector<double> buf(L), seed(L);
  for (std::size_t start = 0; start < total; start += L) {
    const std::size_t active = std::min(L, total - start);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t l = 0; l < L; ++l) {
        const std::size_t p = start + std::min(l, active - 1);
        buf[l] = term.points->coords[(p % n) * d + a];
      }
      ws.set_lanes(a, buf);
    }
    for (std::size_t a = 0; a < np; ++a) {
      for (std::size_t l = 0; l < L; ++l) buf[l] = mu[(start + std::min(l, active - 1)) / n][a];
      ws.set_lanes(d + a, buf);
    }
    ws.forward();
    for (std::size_t c = 0; c < term.components; ++c) {
      double acc = 0.0;
      for (std::size_t l = 0; l < active; ++l) acc += ws.root(1 + c, l);
      parts[c] += acc;
    }
    if (grad) {
      for (std::size_t l = 0; l < L; ++l) seed[l] = l < active ? weight : 0.0;
      ws.backward(0, seed);
      for (std::size_t i = 0; i < theta.size(); ++i) (*grad)[i] += ws.input_adjoint_sum(raw + i);
    }
  }
  for (auto& p : parts) p *= weight;
}

LossValue LossEngine::evaluate(std::span<const double> theta, const std::vector<std::vector<double>>& mu,
                               std::vector<double>* grad) {
  if (theta.size() != model_->parameter_count()) throw std::invalid_argument("LossEngine: parameter count mismatch");
  if (mu.empty()) throw std::invalid_argument("LossEngine: no parameter samples");
  if (grad) grad->assign(theta.size(), 0.0);
  const double m = static_cast<double>(mu.size());

  LossValue v;
  run_term(interior_, theta, mu, 1.0 / (static_cast<double>(interior_.points->size()) * m), v.per_equation, grad);
  for (double p : v.per_equation) v.mse_p += p;
  std::vector<double> parts;
  for (auto& term : conditions_) {
    run_term(term, theta, mu, 1.0 / (static_cast<double>(term.points->size()) * m), parts, grad);
    double s = 0.0;
    for (double p : parts) s += p;
    v.per_condition.push_back(s);
    v.mse_b += s;
  }
  v.total = v.mse_b + v.mse_p;
  return v;
}

double boundary_loss(const Surrogate& model, const LossSpec& spec, std::span<const double> mu) {
  LossEngine e(model, spec);
  return e.evaluate(model.parameters(), {std::vector<double>(mu.begin(), mu.end())}).mse_b;
}

double residual_loss(const Surrogate& model, const LossSpec& spec, std::span<const double> mu) {
  LossEngine e(model, spec);
  return e.evaluate(model.parameters(), {std::vector<double>(mu.begin(), mu.end())}).mse_p;
}

double global_loss(const Surrogate& model, const LossSpec& spec) {
  LossEngine e(model, spec);
  return e.evaluate(model.parameters()).total;
}

std::vector<double> condition_mismatch(const Surrogate& model, std::size_t condition, std::span<const double> points,
                                       std::span<const double> mu) {
  const auto& problem = model.problem();
  if (condition >= problem.boundary_conditions.size()) throw std::out_of_range("condition_mismatch: no such condition");
  if (mu.size() != problem.parameters.dim()) throw std::invalid_argument("condition_mismatch: parameter arity mismatch");
  const std::size_t d = problem.domain.dim();
  if (points.size() % d != 0) throw std::invalid_argument("condition_mismatch: point array is not a multiple of the dimension");
  const std::size_t count = points.size() / d;
  std::vector<double> out(count, 0.0);
  if (count == 0) return out;

  const FieldContext ctx(model.fields(), model.input_vars(), model.param_vars());
  const auto parts = problem.boundary_conditions[condition].mismatch(ctx);
  std::vector<ad::VarId> inputs(model.raw_vars().begin(), model.raw_vars().end());
  inputs.insert(inputs.end(), model.parameter_vars().begin(), model.parameter_vars().end());
  const ad::Program program(parts, inputs, model.raw_vars().size());
  const std::size_t lanes = std::min<std::size_t>(count, 64);
  ad::Workspace ws(program, lanes);
  for (std::size_t i = 0; i < mu.size(); ++i) ws.set_uniform(d + i, mu[i]);
  const auto theta = model.parameters();
  for (std::size_t i = 0; i < theta.size(); ++i) ws.set_uniform(model.raw_vars().size() + i, theta[i]);
  std::vector<double> buf(lanes);
  for (std::size_t start = 0; start < count; start += lanes) {
    const std::size_t active = std::min(lanes, count - start);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t l = 0; l < lanes; ++l) buf[l] = points[(start + std::min(l, active - 1)) * d + a];
      ws.set_lanes(a, buf);
    }
    ws.forward();
    for (std::size_t l = 0; l < active; ++l) {
      for (std::size_t c = 0; c < parts.size(); ++c) out[start + l] = std::max(out[start + l], std::abs(ws.root(c, l)));
    }
  }
  return out;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s) {
  if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    params[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
  }
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::MaxEpochs:
      return "max_epochs";
    case Termination::LossTolerance:
      return "loss_tolerance";
    case Termination::Diverged:
      return "diverged";
  }
  return "unknown";
}

TrainRun train(Surrogate& model, const LossSpec& spec, const TrainOptions& options) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed_ms = [&] { return std::chrono::duration<double, std::milli>(clock::now() - t0).count(); };

  LossEngine engine(model, spec, options.lanes);
  std::vector<double> theta(model.parameters().begin(), model.parameters().end());
  std::vector<double> last_good = theta;
  std::vector<double> grad;
  AdamState state(theta.size(), options.learning_rate);

  TrainRun run;
  for (std::size_t e = 1; e <= options.max_epochs; ++e) {
    const auto lv = engine.evaluate(theta, &grad);
    EpochRecord rec{e, lv.mse_b, lv.mse_p, lv.total, options.record_time ? elapsed_ms() : 0.0};
    run.history.push_back(rec);
    const bool finite = std::isfinite(lv.total) &&
                        std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); });
    if (!finite) {
      run.reason = Termination::Diverged;
      theta = last_good;
      break;
    }
    if (options.loss_tol > 0.0 && lv.total <= options.loss_tol) {
      run.reason = Termination::LossTolerance;
      run.epoch_reached_tol = e;
      break;
    }
    if (options.on_epoch && !options.on_epoch(rec)) break;
    last_good = theta;
    adam_step(theta, grad, state);
  }
  model.set_parameters(theta);
  run.final_parameters = theta;
  run.final_loss = engine.evaluate(theta);
  run.wall_ms = elapsed_ms();
  return run;
}

void write_history_csv(std::ostream& os, const TrainRun& run) {
  os << "epoch,mse_b,mse_p,total,wall_ms\n";
  char buf[160];
  for (const auto& r : run.history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.mse_b, r.mse_p, r.total, r.wall_ms);
    os << buf;
  }
}

}  // namespace pinn
