#include "pinn/piarch.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "pinn/problems.hpp"

namespace pinn {

namespace {

std::size_t index_of(const std::vector<std::string>& names, const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? names.size() : static_cast<std::size_t>(it - names.begin());
}

}  // namespace

ComposedModel ComposedModel::compose(const NetworkSpec& base, std::vector<std::string> base_fields,
                                     std::vector<RelationXi> relations, std::vector<std::string> fields,
                                     std::vector<std::string> raw_names, ad::Graph& graph) {
  if (base.outputs != base_fields.size()) {
    throw std::invalid_argument("compose: base network has " + std::to_string(base.outputs) + " outputs for " +
                                std::to_string(base_fields.size()) + " base fields");
  }
  ComposedModel m(Network::init(base, graph, "net"));
  m.base_fields_ = std::move(base_fields);
  m.relations_ = std::move(relations);
  m.fields_ = std::move(fields);
  m.raw_names_ = std::move(raw_names);

  std::vector<int> producers(m.fields_.size(), 0);
  std::set<std::string> available(m.raw_names_.begin(), m.raw_names_.end());
  for (const auto& f : m.base_fields_) {
    const auto k = index_of(m.fields_, f);
    if (k == m.fields_.size()) throw std::invalid_argument("compose: base field '" + f + "' is not a model field");
    ++producers[k];
    m.base_slot_.push_back(k);
    available.insert(f);
  }
  for (const auto& rel : m.relations_) {
    const auto k = index_of(m.fields_, rel.output);
    if (k == m.fields_.size()) {
      throw std::invalid_argument("compose: relation output '" + rel.output + "' is not a model field");
    }
    ++producers[k];
    Stage st;
    for (const auto& in : rel.inputs) {
      if (!available.count(in)) {
        throw std::invalid_argument("compose: relation for '" + rel.output + "' reads '" + in +
                                    "', which is neither a raw input nor produced by an earlier stage");
      }
      const auto fi = index_of(m.fields_, in);
      st.sources.push_back(fi < m.fields_.size() ? fi : m.fields_.size() + index_of(m.raw_names_, in));
    }
    if (rel.network) {
      NetworkSpec spec = *rel.network;
      spec.inputs = rel.inputs.size();
      spec.outputs = 1;
      st.network = Network::init(spec, graph, "xi." + rel.output);
    } else {
      st.expression = ParsedExpression::parse(rel.expression, std::set<std::string>(rel.inputs.begin(), rel.inputs.end()));
      st.scratch = std::make_shared<ad::Graph>();
      std::vector<ad::Expr> vars;
      for (const auto& in : rel.inputs) {
        vars.push_back(st.scratch->variable(in));
        st.scratch_vars.push_back(st.scratch->var_id(vars.back()));
      }
      st.scratch_root = st.expression->instantiate(
          *st.scratch, [&](const std::string& n) { return vars[index_of(rel.inputs, n)]; });
    }
    m.stage_slot_.push_back(k);
    m.stages_.push_back(std::move(st));
    available.insert(rel.output);
  }
  for (std::size_t k = 0; k < producers.size(); ++k) {
    if (producers[k] == 0) throw std::invalid_argument("compose: field '" + m.fields_[k] + "' is not produced");
    if (producers[k] > 1) throw std::invalid_argument("compose: field '" + m.fields_[k] + "' is produced twice");
  }
  return m;
}

std::size_t ComposedModel::parameter_count() const {
  std::size_t n = base_.parameter_count();
  for (const auto& st : stages_) {
    if (st.network) n += st.network->parameter_count();
  }
  return n;
}

std::vector<ad::VarId> ComposedModel::parameter_vars() const {
  std::vector<ad::VarId> out(base_.parameter_vars().begin(), base_.parameter_vars().end());
  for (const auto& st : stages_) {
    if (st.network) out.insert(out.end(), st.network->parameter_vars().begin(), st.network->parameter_vars().end());
  }
  return out;
}

std::vector<double> ComposedModel::parameters() const {
  std::vector<double> out(base_.parameters().begin(), base_.parameters().end());
  for (const auto& st : stages_) {
    if (st.network) out.insert(out.end(), st.network->parameters().begin(), st.network->parameters().end());
  }
  return out;
}

void ComposedModel::set_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) throw std::invalid_argument("ComposedModel: parameter count mismatch");
  std::size_t off = base_.parameter_count();
  base_.set_parameters(values.first(off));
  for (auto& st : stages_) {
    if (!st.network) continue;
    const auto n = st.network->parameter_count();
    st.network->set_parameters(values.subspan(off, n));
    off += n;
  }
}

std::vector<ad::Expr> ComposedModel::forward_graph(std::span<const ad::Expr> net_inputs,
                                                   std::span<const ad::Expr> raw) const {
  if (raw.size() != raw_names_.size()) throw std::invalid_argument("ComposedModel: raw input count mismatch");
  std::vector<ad::Expr> out(fields_.size());
  const auto base_out = base_.forward_graph(net_inputs);
  for (std::size_t k = 0; k < base_out.size(); ++k) out[base_slot_[k]] = base_out[k];
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const auto& st = stages_[s];
    std::vector<ad::Expr> args;
    for (auto src : st.sources) args.push_back(src < fields_.size() ? out[src] : raw[src - fields_.size()]);
    if (st.network) {
      out[stage_slot_[s]] = st.network->forward_graph(std::span<const ad::Expr>(args))[0];
    } else {
      const auto& names = relations_[s].inputs;
      out[stage_slot_[s]] = st.expression->instantiate(base_.graph(), [&](const std::string& n) {
        return args[index_of(names, n)];
      });
    }
  }
  return out;
}

std::vector<double> ComposedModel::forward(std::span<const double> net_inputs, std::span<const double> raw) const {
  if (raw.size() != raw_names_.size()) throw std::invalid_argument("ComposedModel: raw input count mismatch");
  std::vector<double> out(fields_.size());
  const auto base_out = base_.forward(net_inputs);
  for (std::size_t k = 0; k < base_out.size(); ++k) out[base_slot_[k]] = base_out[k];
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const auto& st = stages_[s];
    std::vector<double> args;
    for (auto src : st.sources) args.push_back(src < fields_.size() ? out[src] : raw[src - fields_.size()]);
    if (st.network) {
      out[stage_slot_[s]] = st.network->forward(args)[0];
    } else {
      ad::Bindings b;
      for (std::size_t i = 0; i < args.size(); ++i) b[st.scratch_vars[i]] = args[i];
      out[stage_slot_[s]] = ad::evaluate(st.scratch_root, b);
    }
  }
  return out;
}

std::vector<RelationXi> problem_relations(const Problem& problem, bool learned, std::uint64_t seed,
                                          const std::vector<std::size_t>& hidden, Activation activation) {
  std::vector<RelationXi> out;
  for (std::size_t i = 0; i < problem.relations.size(); ++i) {
    const auto& r = problem.relations[i];
    RelationXi xi{r.output, r.inputs, r.expression, std::nullopt};
    if (learned) xi.network = NetworkSpec{r.inputs.size(), hidden, 1, activation, seed + 1 + i};
    out.push_back(std::move(xi));
  }
  return out;
}

std::vector<std::string> base_fields_for(const Problem& problem, const std::vector<RelationXi>& relations) {
  std::vector<std::string> out;
  for (const auto& f : problem.fields) {
    const bool derived =
        std::any_of(relations.begin(), relations.end(), [&](const RelationXi& r) { return r.output == f; });
    if (!derived) out.push_back(f);
  }
  return out;
}

double relation_violation(
    const Problem& problem,
    const std::function<std::vector<double>(std::span<const double>, std::span<const double>)>& fields_at,
    std::span<const double> points, std::size_t dim, std::span<const double> mu) {
  if (problem.relations.empty()) throw std::invalid_argument(problem.name + " declares no relation");
  const auto inputs = problem.input_names();
  const auto params = problem.parameter_names();

  ad::Graph g;
  std::vector<std::string> names = problem.fields;
  names.insert(names.end(), inputs.begin(), inputs.end());
  names.insert(names.end(), params.begin(), params.end());
  std::vector<ad::Expr> vars;
  for (const auto& n : names) vars.push_back(g.variable(n));
  std::vector<ad::Expr> roots;
  std::vector<std::size_t> targets;
  for (const auto& r : problem.relations) {
    const auto parsed = ParsedExpression::parse(r.expression, std::set<std::string>(r.inputs.begin(), r.inputs.end()));
    roots.push_back(parsed.instantiate(g, [&](const std::string& n) { return vars[index_of(names, n)]; }));
    targets.push_back(problem.field_index(r.output));
  }

  double worst = 0.0;
  const std::size_t n = dim == 0 ? 0 : points.size() / dim;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = points.subspan(i * dim, dim);
    const auto f = fields_at(x, mu);
    ad::Bindings b;
    std::size_t k = 0;
    for (double v : f) b[g.var_id(vars[k++])] = v;
    for (double v : x) b[g.var_id(vars[k++])] = v;
    for (double v : mu) b[g.var_id(vars[k++])] = v;
    const auto vals = ad::evaluate(roots, b);
    for (std::size_t r = 0; r < roots.size(); ++r) worst = std::max(worst, std::abs(vals[r] - f[targets[r]]));
  }
  return worst;
}

}  // namespace pinn
