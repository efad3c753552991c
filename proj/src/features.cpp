#include "pinn/features.hpp"

#include <map>
#include <set>
#include <stdexcept>

namespace pinn {

FeatureDef feature_preset(const std::string& name) {
  if (name == "poisson_sine") return {name, "sin(pi*x0)*sin(pi*x1)", {}};
  if (name == "poisson_sine_learnable") {
    // alpha: frequency, beta: amplitude, gamma: phase.
    return {name,
            "b0*sin(a0*x0 + g0)*b1*sin(a1*x1 + g1)",
            {{"a0", 1.0}, {"a1", 1.0}, {"b0", 1.0}, {"b1", 1.0}, {"g0", 0.0}, {"g1", 0.0}}};
  }
  if (name == "poisson2_forcing") return {name, "-2*(x1*(1 - x1) + x0*(1 - x0))", {}};
  if (name == "burgers_ic") return {name, "sin(pi*x0)", {}};
  if (name == "ocp_bubble") return {name, "(1 - x0^2)*(1 - x1^2)", {}};
  if (name == "parametric_gaussian") return {name, "exp(-2*((x0 - mu1)^2 + (x1 - mu1)^2))", {}};
  throw std::invalid_argument("unknown feature preset '" + name + "'");
}

std::vector<std::string> feature_preset_names() {
  return {"poisson_sine", "poisson_sine_learnable", "poisson2_forcing", "burgers_ic", "ocp_bubble",
          "parametric_gaussian"};
}

FeatureSet::FeatureSet(ad::Graph& graph, std::vector<FeatureDef> defs, std::vector<std::string> input_names)
    : graph_(&graph), defs_(std::move(defs)), input_names_(std::move(input_names)) {
  const std::set<std::string> inputs(input_names_.begin(), input_names_.end());
  std::set<std::string> seen_params;
  for (const auto& def : defs_) {
    std::set<std::string> allowed = inputs;
    std::vector<ad::VarId> vars;
    for (const auto& [pname, init] : def.parameters) {
      if (inputs.contains(pname)) {
        throw std::invalid_argument("feature '" + def.name + "': parameter '" + pname + "' shadows an input");
      }
      if (!seen_params.insert(pname).second) {
        throw std::invalid_argument("feature '" + def.name + "': duplicate learnable parameter '" + pname + "'");
      }
      allowed.insert(pname);
      vars.push_back(graph.var_id(graph.variable("feature." + pname)));
    }
    parsed_.push_back(ParsedExpression::parse(def.expression, allowed));
    param_vars_.push_back(std::move(vars));
  }
}

std::vector<ad::Expr> FeatureSet::augment(std::span<const ad::Expr> inputs) const {
  if (inputs.size() != input_names_.size()) {
    throw std::invalid_argument("FeatureSet::augment: expected " + std::to_string(input_names_.size()) +
                                " inputs, got " + std::to_string(inputs.size()));
  }
  std::vector<ad::Expr> out(inputs.begin(), inputs.end());
  if (defs_.empty()) return out;
  std::map<std::string, ad::Expr> scope;
  for (std::size_t i = 0; i < inputs.size(); ++i) scope.emplace(input_names_[i], inputs[i]);
  for (std::size_t f = 0; f < defs_.size(); ++f) {
    auto local = scope;
    for (std::size_t k = 0; k < defs_[f].parameters.size(); ++k) {
      local.emplace(defs_[f].parameters[k].first, graph_->variable(param_vars_[f][k]));
    }
    out.push_back(parsed_[f].instantiate(*graph_, [&](const std::string& n) { return local.at(n); }));
  }
  return out;
}

std::vector<std::pair<ad::VarId, double>> FeatureSet::feature_params() const {
  std::vector<std::pair<ad::VarId, double>> out;
  for (std::size_t f = 0; f < defs_.size(); ++f) {
    for (std::size_t k = 0; k < defs_[f].parameters.size(); ++k) {
      out.emplace_back(param_vars_[f][k], defs_[f].parameters[k].second);
    }
  }
  return out;
}

}  // namespace pinn
