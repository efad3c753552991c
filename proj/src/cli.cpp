#include "pinn/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "pinn/expression.hpp"
#include "pinn/piarch.hpp"
#include "pinn/reference.hpp"

#ifndef PINN_PRESET_DIR
#define PINN_PRESET_DIR "presets"
#endif

namespace pinn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string located(const std::string& source, std::size_t line, const std::string& message) {
  if (line == 0) return source + ": " + message;
  return source + ":" + std::to_string(line) + ": " + message;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string sampler_name(SamplerKind k) {
  switch (k) {
    case SamplerKind::Grid:
      return "grid";
    case SamplerKind::LatinHypercube:
      return "lhs";
    case SamplerKind::UniformRandom:
      return "random";
  }
  return "grid";
}

struct Entry {
  std::string section, key, value;
  std::size_t line;
};

class Reader {
 public:
  Reader(std::string source, const Entry& e) : source_(std::move(source)), e_(e) {}

  [[noreturn]] void fail(const std::string& message) const {
    throw ConfigError(source_, e_.line, "[" + e_.section + "] " + e_.key + ": " + message);
  }

  double real() const {
    double v = 0.0;
    const auto& s = e_.value;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) fail("expected a number, got '" + s + "'");
    return v;
  }

  std::uint64_t integer() const {
    std::uint64_t v = 0;
    const auto& s = e_.value;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("expected a non-negative integer, got '" + s + "'");
    return v;
  }

  std::size_t count() const {
    const auto v = integer();
    if (v == 0) fail("must be positive");
    return static_cast<std::size_t>(v);
  }

  bool boolean() const {
    const auto& s = e_.value;
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
    fail("expected true or false, got '" + s + "'");
  }

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> out;
    if (e_.value.empty() || e_.value == "none") return out;
    for (const auto& part : split(e_.value, ',')) {
      std::size_t v = 0;
      const auto r = std::from_chars(part.data(), part.data() + part.size(), v);
      if (part.empty() || r.ec != std::errc() || r.ptr != part.data() + part.size() || v == 0) {
        fail("expected a comma-separated list of positive widths, got '" + e_.value + "'");
      }
      out.push_back(v);
    }
    return out;
  }

  std::vector<double> reals() const {
    std::vector<double> out;
    if (e_.value.empty()) return out;
    for (const auto& part : split(e_.value, ',')) {
      double v = 0.0;
      const auto r = std::from_chars(part.data(), part.data() + part.size(), v);
      if (part.empty() || r.ec != std::errc() || r.ptr != part.data() + part.size()) {
        fail("expected a comma-separated list of numbers, got '" + e_.value + "'");
      }
      out.push_back(v);
    }
    return out;
  }

  SamplerKind sampler(bool boundary) const {
    const auto& s = e_.value;
    if (s == "grid") return SamplerKind::Grid;
    if (s == "random") return SamplerKind::UniformRandom;
    if (s == "lhs" && !boundary) return SamplerKind::LatinHypercube;
    fail(boundary ? "expected grid or random, got '" + s + "'" : "expected grid, lhs or random, got '" + s + "'");
  }

  const std::string& text() const { return e_.value; }

 private:
  std::string source_;
  const Entry& e_;
};

std::vector<std::vector<double>> default_eval_mu(const Problem& p) {
  if (p.parameters.empty()) return {{}};
  if (p.name == "poisson_param") return {{-0.8, -0.8}, {0.8, 0.8}};
  if (p.name == "ocp_poisson") {
    std::vector<std::vector<double>> out;
    for (double m1 : {1.0, 2.0, 3.0}) {
      for (double m2 : {1.0, 0.1, 0.01}) out.push_back({m1, m2});
    }
    return out;
  }
  std::vector<double> mid;
  for (const auto& a : p.parameters.axes()) mid.push_back(0.5 * (a.low + a.high));
  return {mid};
}

FeatureDef parse_feature_expr(const Reader& r, std::size_t index) {
  // name: expression | p = v, q = w
  std::string text = r.text();
  std::string params;
  if (const auto bar = text.find('|'); bar != std::string::npos) {
    params = trim(text.substr(bar + 1));
    text = trim(text.substr(0, bar));
  }
  FeatureDef def;
  if (const auto colon = text.find(':'); colon != std::string::npos) {
    def.name = trim(text.substr(0, colon));
    def.expression = trim(text.substr(colon + 1));
  } else {
    def.name = "k" + std::to_string(index);
    def.expression = trim(text);
  }
  if (def.name.empty() || def.expression.empty()) r.fail("expected 'name: expression [| p = value, ...]'");
  if (!params.empty()) {
    for (const auto& item : split(params, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) r.fail("learnable parameter '" + item + "' needs '= value'");
      const auto name = trim(item.substr(0, eq));
      const auto value = trim(item.substr(eq + 1));
      double v = 0.0;
      const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
      if (name.empty() || res.ec != std::errc() || res.ptr != value.data() + value.size()) {
        r.fail("bad learnable parameter '" + item + "'");
      }
      def.parameters.emplace_back(name, v);
    }
  }
  return def;
}

void validate_features(const ExperimentConfig& c, const std::string& source, std::size_t line) {
  const auto& p = c.problem_ref();
  auto names = p.input_names();
  for (const auto& n : p.parameter_names()) names.push_back(n);
  try {
    ad::Graph g;
    FeatureSet fs(g, c.features(), names);
  } catch (const std::exception& e) {
    throw ConfigError(source, line, std::string("feature: ") + e.what());
  }
}

}  // namespace

ConfigError::ConfigError(const std::string& source, std::size_t line, const std::string& message)
    : std::runtime_error(located(source, line, message)), line_(line) {}

ModelConfig ExperimentConfig::model_config() const {
  ModelConfig m;
  m.architecture = architecture;
  m.learned_relation = learned_relation;
  m.relation_hidden = relation_hidden;
  m.hidden = hidden;
  m.activation = activation;
  m.seed = seed;
  m.features = features();
  return m;
}

std::vector<FeatureDef> ExperimentConfig::features() const {
  std::vector<FeatureDef> out;
  for (const auto& name : feature_presets) out.push_back(feature_preset(name));
  out.insert(out.end(), feature_exprs.begin(), feature_exprs.end());
  return out;
}

TrainOptions ExperimentConfig::train_options() const {
  TrainOptions o;
  o.learning_rate = learning_rate;
  o.max_epochs = max_epochs;
  o.loss_tol = loss_tol;
  o.record_time = record_time;
  o.lanes = lanes;
  return o;
}

void ExperimentConfig::apply_full() {
  if (full_max_epochs) max_epochs = *full_max_epochs;
  if (full_loss_tol) loss_tol = *full_loss_tol;
}

ExperimentConfig default_config(const Problem& p) {
  ExperimentConfig c;
  c.problem = p.name;
  c.output = "runs/" + p.name;
  c.architecture = p.defaults.architecture;
  c.hidden = p.defaults.hidden;
  c.activation = p.defaults.activation;
  if (!p.defaults.feature.empty()) c.feature_presets = {p.defaults.feature};
  c.sampling.n_interior = p.defaults.n_interior;
  c.sampling.interior = p.defaults.interior_sampler;
  c.sampling.n_boundary = p.defaults.n_boundary;
  c.sampling.boundary = p.defaults.boundary_sampler;
  c.sampling.n_parameter = p.parameters.empty() ? 1 : p.defaults.n_parameter;
  c.sampling.parameter = p.defaults.parameter_sampler;
  c.sampling.seed = 0;
  c.learning_rate = p.defaults.learning_rate;
  c.max_epochs = p.defaults.epochs;
  c.eval_mu = default_eval_mu(p);
  return c;
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  static const std::map<std::string, std::vector<std::string>> schema = {
      {"experiment", {"problem", "seed", "output"}},
      {"model",
       {"architecture", "hidden", "activation", "feature", "feature_expr", "learned_relation", "relation_hidden"}},
      {"sampling", {"interior", "n_interior", "boundary", "n_boundary", "parameter", "n_parameter", "seed"}},
      {"training", {"learning_rate", "max_epochs", "loss_tol", "record_time", "lanes"}},
      {"evaluation", {"grid", "mu", "reference_n"}},
      {"full", {"max_epochs", "loss_tol"}},
  };
  static const std::vector<std::string> repeatable = {"feature_expr", "mu"};

  std::vector<Entry> entries;
  std::string section;
  std::string raw;
  std::size_t line = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, raw)) {
    ++line;
    std::string text = raw;
    if (const auto c = text.find_first_of("#;"); c != std::string::npos) text.erase(c);
    text = trim(text);
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError(source, line, "unterminated section header");
      section = trim(text.substr(1, text.size() - 2));
      if (!schema.contains(section)) throw ConfigError(source, line, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line, "expected 'key = value'");
    if (section.empty()) throw ConfigError(source, line, "key outside of any section");
    Entry e{section, trim(text.substr(0, eq)), trim(text.substr(eq + 1)), line};
    const auto& keys = schema.at(section);
    if (std::find(keys.begin(), keys.end(), e.key) == keys.end()) {
      throw ConfigError(source, line, "unknown key '" + e.key + "' in [" + section + "]");
    }
    const auto id = section + "." + e.key;
    if (std::find(repeatable.begin(), repeatable.end(), e.key) == repeatable.end() && seen.contains(id)) {
      throw ConfigError(source, line, "duplicate key '" + e.key + "' (first set on line " +
                                          std::to_string(seen[id]) + ")");
    }
    seen.emplace(id, line);
    entries.push_back(std::move(e));
  }

  const auto problem_entry =
      std::find_if(entries.begin(), entries.end(), [](const Entry& e) { return e.section == "experiment" && e.key == "problem"; });
  if (problem_entry == entries.end()) throw ConfigError(source, 0, "missing [experiment] problem");
  const Problem* problem = nullptr;
  try {
    problem = &find_problem(problem_entry->value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, problem_entry->line, e.what());
  }

  ExperimentConfig c = default_config(*problem);
  bool sampling_seed_set = false;
  bool features_cleared = false;
  bool mu_cleared = false;
  std::size_t feature_line = 0;
  std::size_t architecture_line = 0;
  std::size_t mu_line = 0;

  for (const auto& e : entries) {
    const Reader r(source, e);
    const auto id = e.section + "." + e.key;
    if (id == "experiment.problem") {
      continue;
    } else if (id == "experiment.seed") {
      c.seed = r.integer();
    } else if (id == "experiment.output") {
      if (e.value.empty()) r.fail("must not be empty");
      c.output = e.value;
    } else if (id == "model.architecture") {
      if (e.value != "flat" && e.value != "pi_arch") r.fail("expected flat or pi_arch, got '" + e.value + "'");
      c.architecture = e.value;
      architecture_line = e.line;
    } else if (id == "model.hidden") {
      c.hidden = r.widths();
    } else if (id == "model.activation") {
      try {
        c.activation = parse_activation(e.value);
      } catch (const std::exception&) {
        r.fail("expected softplus or tanh, got '" + e.value + "'");
      }
    } else if (id == "model.feature") {
      c.feature_presets.clear();
      if (!e.value.empty() && e.value != "none") {
        for (const auto& name : split(e.value, ',')) {
          try {
            feature_preset(name);
          } catch (const std::invalid_argument&) {
            r.fail("unknown feature preset '" + name + "'");
          }
          c.feature_presets.push_back(name);
        }
      }
      feature_line = e.line;
    } else if (id == "model.feature_expr") {
      if (!features_cleared) c.feature_exprs.clear();
      features_cleared = true;
      c.feature_exprs.push_back(parse_feature_expr(r, c.feature_exprs.size()));
      feature_line = e.line;
    } else if (id == "model.learned_relation") {
      c.learned_relation = r.boolean();
    } else if (id == "model.relation_hidden") {
      c.relation_hidden = r.widths();
    } else if (id == "sampling.interior") {
      c.sampling.interior = r.sampler(false);
    } else if (id == "sampling.n_interior") {
      c.sampling.n_interior = r.count();
    } else if (id == "sampling.boundary") {
      c.sampling.boundary = r.sampler(true);
    } else if (id == "sampling.n_boundary") {
      c.sampling.n_boundary = r.count();
    } else if (id == "sampling.parameter") {
      c.sampling.parameter = r.sampler(false);
    } else if (id == "sampling.n_parameter") {
      c.sampling.n_parameter = r.count();
      if (problem->parameters.empty() && c.sampling.n_parameter != 1) r.fail(problem->name + " has no parameters");
    } else if (id == "sampling.seed") {
      c.sampling.seed = r.integer();
      sampling_seed_set = true;
    } else if (id == "training.learning_rate") {
      c.learning_rate = r.real();
      if (!(c.learning_rate > 0.0)) r.fail("must be positive");
    } else if (id == "training.max_epochs") {
      c.max_epochs = static_cast<std::size_t>(r.integer());
    } else if (id == "training.loss_tol") {
      c.loss_tol = r.real();
      if (c.loss_tol < 0.0) r.fail("must be non-negative");
    } else if (id == "training.record_time") {
      c.record_time = r.boolean();
    } else if (id == "training.lanes") {
      c.lanes = r.count();
    } else if (id == "evaluation.grid") {
      c.eval_grid = r.count();
      if (c.eval_grid < 2) r.fail("needs at least 2 nodes per axis");
    } else if (id == "evaluation.mu") {
      if (!mu_cleared) c.eval_mu.clear();
      mu_cleared = true;
      auto mu = r.reals();
      if (mu.size() != problem->parameters.dim()) {
        r.fail("expected " + std::to_string(problem->parameters.dim()) + " values for " + problem->name);
      }
      c.eval_mu.push_back(std::move(mu));
      mu_line = e.line;
    } else if (id == "evaluation.reference_n") {
      c.reference_n = r.count();
      if (c.reference_n < 9) r.fail("needs at least 9 nodes per axis");
    } else if (id == "full.max_epochs") {
      c.full_max_epochs = static_cast<std::size_t>(r.integer());
    } else if (id == "full.loss_tol") {
      c.full_loss_tol = r.real();
      if (*c.full_loss_tol < 0.0) r.fail("must be non-negative");
    }
  }
  if (!sampling_seed_set) c.sampling.seed = c.seed;
  if (problem->parameters.empty() && !mu_cleared) c.eval_mu = {{}};
  if (c.eval_mu.empty()) throw ConfigError(source, mu_line, "no evaluation parameters");
  if (c.architecture == "pi_arch" && problem->relations.empty()) {
    throw ConfigError(source, architecture_line, "pi_arch needs a problem with an optimality relation; '" +
                                                     problem->name + "' has none");
  }
  validate_features(c, source, feature_line);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "cannot open file");
  return parse_config(in, path.string());
}

void write_config(std::ostream& os, const ExperimentConfig& c) {
  auto widths = [](const std::vector<std::size_t>& w) {
    if (w.empty()) return std::string("none");
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) s += (i ? ", " : "") + std::to_string(w[i]);
    return s;
  };
  os << "[experiment]\n";
  os << "problem = " << c.problem << "\n";
  os << "seed = " << c.seed << "\n";
  os << "output = " << c.output << "\n\n";
  os << "[model]\n";
  os << "architecture = " << c.architecture << "\n";
  os << "hidden = " << widths(c.hidden) << "\n";
  os << "activation = " << to_string(c.activation) << "\n";
  std::string presets;
  for (std::size_t i = 0; i < c.feature_presets.size(); ++i) presets += (i ? ", " : "") + c.feature_presets[i];
  os << "feature = " << (presets.empty() ? "none" : presets) << "\n";
  for (const auto& f : c.feature_exprs) {
    os << "feature_expr = " << f.name << ": " << f.expression;
    for (std::size_t i = 0; i < f.parameters.size(); ++i) {
      os << (i ? ", " : " | ") << f.parameters[i].first << " = " << fmt(f.parameters[i].second);
    }
    os << "\n";
  }
  os << "learned_relation = " << (c.learned_relation ? "true" : "false") << "\n";
  os << "relation_hidden = " << widths(c.relation_hidden) << "\n\n";
  os << "[sampling]\n";
  os << "interior = " << sampler_name(c.sampling.interior) << "\n";
  os << "n_interior = " << c.sampling.n_interior << "\n";
  os << "boundary = " << sampler_name(c.sampling.boundary) << "\n";
  os << "n_boundary = " << c.sampling.n_boundary << "\n";
  os << "parameter = " << sampler_name(c.sampling.parameter) << "\n";
  os << "n_parameter = " << c.sampling.n_parameter << "\n";
  os << "seed = " << c.sampling.seed << "\n\n";
  os << "[training]\n";
  os << "learning_rate = " << fmt(c.learning_rate) << "\n";
  os << "max_epochs = " << c.max_epochs << "\n";
  os << "loss_tol = " << fmt(c.loss_tol) << "\n";
  os << "record_time = " << (c.record_time ? "true" : "false") << "\n";
  os << "lanes = " << c.lanes << "\n\n";
  os << "[evaluation]\n";
  os << "grid = " << c.eval_grid << "\n";
  for (const auto& mu : c.eval_mu) {
    if (mu.empty()) continue;
    os << "mu = ";
    for (std::size_t i = 0; i < mu.size(); ++i) os << (i ? ", " : "") << fmt(mu[i]);
    os << "\n";
  }
  os << "reference_n = " << c.reference_n << "\n";
  if (c.full_max_epochs || c.full_loss_tol) {
    os << "\n[full]\n";
    if (c.full_max_epochs) os << "max_epochs = " << *c.full_max_epochs << "\n";
    if (c.full_loss_tol) os << "loss_tol = " << fmt(*c.full_loss_tol) << "\n";
  }
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json loss_json(const LossValue& v) {
  return {{"mse_b", v.mse_b},
          {"mse_p", v.mse_p},
          {"total", v.total},
          {"per_equation", v.per_equation},
          {"per_condition", v.per_condition}};
}

PointSet evaluation_grid(const Problem& p, std::size_t n) {
  std::vector<std::size_t> counts(p.domain.dim(), n);
  return cartesian_grid(p.domain, counts);
}

EvaluationResult evaluate_at(const Surrogate& model, const ExperimentConfig& c, const std::vector<double>& mu,
                             std::size_t k, const fs::path& dir) {
  const auto& p = model.problem();
  const auto grid = evaluation_grid(p, c.eval_grid);
  const std::size_t d = p.domain.dim();
  const std::size_t nf = p.fields.size();
  const auto pred = model.predict(grid.coords, mu);

  EvaluationResult res;
  res.mu = mu;
  {
    std::ostringstream os;
    for (const auto& n : p.input_names()) os << n << ',';
    for (std::size_t f = 0; f < nf; ++f) os << p.fields[f] << (f + 1 < nf ? "," : "\n");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      for (std::size_t a = 0; a < d; ++a) os << fmt(grid.coords[i * d + a]) << ',';
      for (std::size_t f = 0; f < nf; ++f) os << fmt(pred[i * nf + f]) << (f + 1 < nf ? "," : "\n");
    }
    write_text(dir / ("prediction_" + std::to_string(k) + ".csv"), os.str());
  }

  // Reference values at the grid nodes, if any.
  std::vector<std::size_t> ref_fields;
  std::vector<double> ref;
  if (p.exact) {
    for (std::size_t f = 0; f < nf; ++f) ref_fields.push_back(f);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto e = p.exact(grid.point(i), mu);
      ref.insert(ref.end(), e.begin(), e.end());
    }
  } else if (has_reference(p)) {
    const auto sol = solve_reference(p, mu, c.reference_n);
    for (const auto& name : sol.fields) ref_fields.push_back(p.field_index(name));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto v = interpolate(sol, grid.point(i));
      ref.insert(ref.end(), v.begin(), v.end());
    }
  }
  if (!ref_fields.empty()) {
    const std::size_t nr = ref_fields.size();
    res.max_error.assign(nr, 0.0);
    res.mean_error.assign(nr, 0.0);
    for (auto f : ref_fields) res.error_fields.push_back(p.fields[f]);
    std::ostringstream os;
    for (const auto& n : p.input_names()) os << n << ',';
    for (std::size_t r = 0; r < nr; ++r) os << "err_" << p.fields[ref_fields[r]] << (r + 1 < nr ? "," : "\n");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      for (std::size_t a = 0; a < d; ++a) os << fmt(grid.coords[i * d + a]) << ',';
      for (std::size_t r = 0; r < nr; ++r) {
        const double err = std::abs(pred[i * nf + ref_fields[r]] - ref[i * nr + r]);
        res.max_error[r] = std::max(res.max_error[r], err);
        res.mean_error[r] += err;
        os << fmt(err) << (r + 1 < nr ? "," : "\n");
      }
    }
    for (auto& m : res.mean_error) m /= static_cast<double>(grid.size());
    write_text(dir / ("error_" + std::to_string(k) + ".csv"), os.str());
  }

  if (!p.relations.empty()) {
    auto fields_at = [&](std::span<const double> x, std::span<const double> m) { return model.predict_point(x, m); };
    res.relation_violation = relation_violation(p, fields_at, grid.coords, d, mu);
  }
  for (std::size_t l = 0; l < p.boundary_conditions.size(); ++l) {
    const auto pts = boundary_sample(p.domain, 100, BoundaryMode::Equispaced, 0, p.boundary_conditions[l].facets);
    const auto m = condition_mismatch(model, l, pts.coords, mu);
    res.condition_max_mismatch.push_back(m.empty() ? 0.0 : *std::max_element(m.begin(), m.end()));
  }
  return res;
}

json evaluation_json(const Problem& p, const EvaluationResult& e, std::size_t k) {
  json j;
  j["mu"] = e.mu;
  j["prediction"] = "prediction_" + std::to_string(k) + ".csv";
  if (e.error_fields.empty()) {
    j["error"] = nullptr;
  } else {
    j["error"] = "error_" + std::to_string(k) + ".csv";
    json mx, mean;
    for (std::size_t r = 0; r < e.error_fields.size(); ++r) {
      mx[e.error_fields[r]] = e.max_error[r];
      mean[e.error_fields[r]] = e.mean_error[r];
    }
    j["max_error"] = mx;
    j["mean_error"] = mean;
  }
  j["relation_violation"] = e.relation_violation ? json(*e.relation_violation) : json(nullptr);
  json bc;
  for (std::size_t l = 0; l < e.condition_max_mismatch.size(); ++l) {
    bc[p.boundary_conditions[l].name] = e.condition_max_mismatch[l];
  }
  j["condition_max_mismatch"] = bc;
  return j;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const fs::path& out, const RunOptions& options,
                         std::ostream& log) {
  ExperimentConfig c = config;
  if (options.full) c.apply_full();
  const auto& p = c.problem_ref();
  const fs::path dir = out.empty() ? fs::path(c.output) : out;
  fs::create_directories(dir);
  {
    std::ostringstream os;
    write_config(os, c);
    write_text(dir / "config.ini", os.str());
  }

  const auto spec = make_loss_spec(p, c.sampling);
  Surrogate model(p, c.model_config());
  auto opts = c.train_options();
  if (!options.quiet) {
    const std::size_t every = std::max<std::size_t>(options.progress_every, 1);
    opts.on_epoch = [&log, every](const EpochRecord& r) {
      if (r.epoch == 1 || r.epoch % every == 0) {
        log << "epoch " << r.epoch << "  loss " << short_fmt(r.total) << "  (b " << short_fmt(r.mse_b) << ", p "
            << short_fmt(r.mse_p) << ")\n";
        log.flush();
      }
      return true;
    };
  }
  if (!options.quiet) {
    log << p.name << ": " << model.parameter_count() << " parameters, " << spec.interior.size() << " interior x "
        << spec.mu.size() << " parameter samples\n";
  }

  RunResult result;
  result.directory = dir;
  result.train = train(model, spec, opts);
  {
    std::ostringstream os;
    write_history_csv(os, result.train);
    write_text(dir / "loss.csv", os.str());
  }
  {
    json j;
    j["problem"] = p.name;
    j["architecture"] = c.architecture;
    j["parameter_count"] = model.parameter_count();
    j["network_parameter_count"] = model.network_parameter_count();
    j["parameters"] = std::vector<double>(model.parameters().begin(), model.parameters().end());
    json feats = json::object();
    std::size_t idx = model.network_parameter_count();
    for (const auto& f : model.features().definitions()) {
      for (const auto& [name, init] : f.parameters) feats[f.name + "." + name] = model.parameters()[idx++];
    }
    j["feature_parameters"] = feats;
    write_text(dir / "params.json", j.dump(2) + "\n");
  }

  json summary;
  summary["problem"] = p.name;
  summary["architecture"] = c.architecture;
  summary["termination"] = to_string(result.train.reason);
  summary["epochs"] = result.train.history.size();
  summary["epoch_reached_tol"] =
      result.train.epoch_reached_tol ? json(*result.train.epoch_reached_tol) : json(nullptr);
  summary["final_loss"] = loss_json(result.train.final_loss);
  if (c.record_time) summary["wall_ms"] = result.train.wall_ms;
  json evals = json::array();
  if (result.train.reason != Termination::Diverged) {
    for (std::size_t k = 0; k < c.eval_mu.size(); ++k) {
      result.evaluations.push_back(evaluate_at(model, c, c.eval_mu[k], k, dir));
      evals.push_back(evaluation_json(p, result.evaluations.back(), k));
    }
  }
  summary["evaluations"] = evals;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  if (!options.quiet) {
    log << "finished: " << to_string(result.train.reason) << " after " << result.train.history.size()
        << " epochs, final loss " << short_fmt(result.train.final_loss.total) << "\n";
  }
  return result;
}

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in);
}

}  // namespace

std::unique_ptr<Surrogate> load_surrogate(const fs::path& run_dir, ExperimentConfig* config) {
  auto c = load_config(run_dir / "config.ini");
  const auto params = read_json(run_dir / "params.json");
  auto model = std::make_unique<Surrogate>(c.problem_ref(), c.model_config());
  model->set_parameters(params.at("parameters").get<std::vector<double>>());
  if (config) *config = std::move(c);
  return model;
}

Report make_report(const std::vector<fs::path>& run_dirs, std::optional<double> tolerance) {
  if (run_dirs.empty()) throw std::invalid_argument("report: no run directories");
  Report rep;
  std::vector<ExperimentConfig> configs;
  for (const auto& dir : run_dirs) {
    configs.push_back(load_config(dir / "config.ini"));
    if (rep.problem.empty()) rep.problem = configs.back().problem;
    if (configs.back().problem != rep.problem) {
      throw std::invalid_argument("report: runs mix problems '" + rep.problem + "' and '" + configs.back().problem +
                                  "'");
    }
  }
  rep.tolerance = tolerance ? *tolerance : (configs.front().loss_tol > 0.0 ? configs.front().loss_tol : 1e-3);

  for (std::size_t r = 0; r < run_dirs.size(); ++r) {
    const auto& dir = run_dirs[r];
    const auto summary = read_json(dir / "summary.json");
    ReportRow row;
    row.run = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    row.architecture = configs[r].architecture;
    row.final_loss = summary.at("final_loss").at("total").get<double>();
    row.epochs = summary.at("epochs").get<std::size_t>();

    std::ifstream loss(dir / "loss.csv");
    std::string line;
    std::getline(loss, line);
    while (std::getline(loss, line)) {
      const auto cols = split(line, ',');
      if (cols.size() < 4) continue;
      if (std::strtod(cols[3].c_str(), nullptr) <= rep.tolerance) {
        row.epochs_to_tol = std::strtoull(cols[0].c_str(), nullptr, 10);
        break;
      }
    }

    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& e : summary.at("evaluations")) {
      if (e.contains("max_error")) {
        for (const auto& [k, v] : e.at("max_error").items()) row.max_error = std::max(row.max_error.value_or(0.0), v.get<double>());
        for (const auto& [k, v] : e.at("mean_error").items()) {
          sum += v.get<double>();
          ++n;
        }
      }
      if (!e.at("relation_violation").is_null()) {
        row.relation_violation = std::max(row.relation_violation.value_or(0.0), e.at("relation_violation").get<double>());
      }
    }
    if (n) row.mean_error = sum / static_cast<double>(n);
    rep.rows.push_back(row);
  }

  if (rep.problem == "ocp_poisson") {
    const double origin[] = {0.0, 0.0};
    std::vector<std::pair<std::vector<double>, std::vector<double>>> refs;
    for (double m1 : {1.0, 2.0, 3.0}) {
      for (double m2 : {1.0, 0.1, 0.01}) {
        const std::vector<double> mu = {m1, m2};
        refs.emplace_back(mu, interpolate(solve_ocp_poisson_fd(mu, configs.front().reference_n), origin));
      }
    }
    for (std::size_t r = 0; r < run_dirs.size(); ++r) {
      const auto model = load_surrogate(run_dirs[r]);
      for (const auto& [mu, ref] : refs) {
        const auto v = model->predict_point(origin, mu);
        rep.ocp.push_back({rep.rows[r].run, mu[0], mu[1], v[0], ref[0], v[1], ref[1]});
      }
    }
  }
  return rep;
}

void write_report_text(std::ostream& os, const Report& rep) {
  auto opt = [](const std::optional<double>& v) { return v ? short_fmt(*v) : std::string("-"); };
  os << "problem: " << rep.problem << "   tolerance: " << short_fmt(rep.tolerance) << "\n";
  os << std::left << std::setw(24) << "run" << std::setw(10) << "arch" << std::setw(12) << "final_loss"
     << std::setw(8) << "epochs" << std::setw(14) << "epochs_to_tol" << std::setw(12) << "max_error"
     << std::setw(12) << "mean_error" << "relation_violation\n";
  for (const auto& r : rep.rows) {
    os << std::left << std::setw(24) << r.run << std::setw(10) << r.architecture << std::setw(12)
       << short_fmt(r.final_loss) << std::setw(8) << r.epochs << std::setw(14)
       << (r.epochs_to_tol ? std::to_string(*r.epochs_to_tol) : std::string("not reached")) << std::setw(12)
       << opt(r.max_error) << std::setw(12) << opt(r.mean_error) << opt(r.relation_violation) << "\n";
  }
  if (!rep.ocp.empty()) {
    os << "\nvalues at (0,0) against the finite-difference reference\n";
    os << std::left << std::setw(24) << "run" << std::setw(6) << "mu1" << std::setw(6) << "mu2" << std::setw(12)
       << "y" << std::setw(12) << "y_ref" << std::setw(12) << "u" << "u_ref\n";
    for (const auto& r : rep.ocp) {
      os << std::left << std::setw(24) << r.run << std::setw(6) << short_fmt(r.mu1) << std::setw(6)
         << short_fmt(r.mu2) << std::setw(12) << short_fmt(r.y) << std::setw(12) << short_fmt(r.y_ref)
         << std::setw(12) << short_fmt(r.u) << short_fmt(r.u_ref) << "\n";
    }
  }
}

void write_report_csv(std::ostream& os, const Report& rep) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  os << "run,problem,architecture,final_loss,epochs,epochs_to_tol,max_error,mean_error,relation_violation\n";
  for (const auto& r : rep.rows) {
    os << r.run << ',' << rep.problem << ',' << r.architecture << ',' << fmt(r.final_loss) << ',' << r.epochs << ','
       << (r.epochs_to_tol ? std::to_string(*r.epochs_to_tol) : std::string()) << ',' << opt(r.max_error) << ','
       << opt(r.mean_error) << ',' << opt(r.relation_violation) << '\n';
  }
}

void write_ocp_csv(std::ostream& os, const Report& rep) {
  os << "run,mu1,mu2,y,y_ref,u,u_ref\n";
  for (const auto& r : rep.ocp) {
    os << r.run << ',' << fmt(r.mu1) << ',' << fmt(r.mu2) << ',' << fmt(r.y) << ',' << fmt(r.y_ref) << ','
       << fmt(r.u) << ',' << fmt(r.u_ref) << '\n';
  }
}

fs::path preset_directory() {
  if (const char* env = std::getenv("PINN_PRESETS"); env && *env) return env;
  return PINN_PRESET_DIR;
}

std::vector<CheckResult> run_checks(const fs::path& preset_dir) {
  std::vector<CheckResult> out;
  auto record = [&](const std::string& name, auto&& body) {
    CheckResult r{name, false, {}};
    try {
      r.detail = body(r.passed);
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    out.push_back(r);
  };

  record("activation second derivatives match finite differences", [](bool& ok) {
    ad::Graph g;
    auto x = g.variable("x");
    double worst = 0.0;
    for (auto f : {ad::softplus(1.7 * x - 0.3), ad::tanh(1.7 * x - 0.3)}) {
      const auto d1 = ad::derive(f, g.var_id(x));
      for (double v : {-2.0, -0.4, 0.0, 0.9, 2.5}) worst = std::max(worst, ad::fd_check(d1, {{g.var_id(x), v}}, 1e-5));
    }
    ok = worst < 1e-6;
    return "max deviation " + short_fmt(worst);
  });

  record("closed forms have zero loss", [](bool& ok) {
    double worst = 0.0;
    for (const char* name : {"poisson1", "poisson2"}) {
      const auto& p = find_problem(name);
      Surrogate model(p, [&p](ad::Graph& g, std::span<const ad::Expr> raw) {
        return p.exact_expr(g, raw.first(p.domain.dim()), raw.subspan(p.domain.dim()));
      });
      SamplingConfig s;
      const auto spec = make_loss_spec(p, s);
      worst = std::max(worst, global_loss(model, spec));
    }
    ok = worst < 1e-14;
    return "max loss " + short_fmt(worst);
  });

  record("loss gradients match central differences", [](bool& ok) {
    double worst = 0.0;
    for (const auto& p : catalog()) {
      ModelConfig mc;
      mc.hidden = {4};
      mc.seed = 1;
      if (!p.relations.empty()) mc.architecture = "pi_arch";
      Surrogate model(p, mc);
      SamplingConfig s;
      s.n_interior = 9;
      s.n_boundary = 12;
      s.n_parameter = p.parameters.empty() ? 1 : 2;
      const auto spec = make_loss_spec(p, s);
      LossEngine engine(model, spec, 8);
      std::vector<double> theta(model.parameters().begin(), model.parameters().end());
      std::vector<double> grad;
      engine.evaluate(theta, &grad);
      for (std::size_t i = 0; i < theta.size(); i += 3) {
        const double h = 1e-5;
        auto t = theta;
        t[i] += h;
        const double up = engine.evaluate(t).total;
        t[i] = theta[i] - h;
        const double down = engine.evaluate(t).total;
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1.0, std::abs(fd)));
      }
    }
    ok = worst < 1e-5;
    return "max relative deviation " + short_fmt(worst);
  });

  record("finite-difference reference converges at second order", [](bool& ok) {
    const auto& p = find_problem("poisson1");
    auto err = [&](std::size_t n) {
      const auto sol = solve_reference(p, {}, n);
      double e = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double x[] = {sol.coord(0, i), sol.coord(1, j)};
          e = std::max(e, std::abs(sol.at(0, i, j) - p.exact(x, {})[0]));
        }
      }
      return e;
    };
    const double ratio = err(33) / err(65);
    ok = ratio >= 3.5;
    return "error ratio " + short_fmt(ratio);
  });

  record("shipped presets validate", [&preset_dir](bool& ok) {
    std::size_t n = 0;
    if (fs::is_directory(preset_dir)) {
      for (const auto& entry : fs::directory_iterator(preset_dir)) {
        if (entry.path().extension() != ".ini") continue;
        load_config(entry.path());
        ++n;
      }
    }
    ok = n > 0;
    return std::to_string(n) + " presets in " + preset_dir.string();
  });

  record("training is reproducible", [](bool& ok) {
    const auto& p = find_problem("poisson1");
    SamplingConfig s;
    const auto spec = make_loss_spec(p, s);
    TrainOptions o;
    o.max_epochs = 25;
    o.learning_rate = 0.003;
    auto once = [&] {
      ModelConfig mc;
      mc.hidden = {6, 6};
      mc.seed = 3;
      Surrogate model(p, mc);
      std::ostringstream os;
      write_history_csv(os, train(model, spec, o));
      return os.str();
    };
    ok = once() == once();
    return ok ? std::string("identical loss histories") : std::string("histories differ");
  });
  return out;
}

}  // namespace pinn
