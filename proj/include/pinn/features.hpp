#pragma once
/**
 * @file features.hpp
 * @brief Extra input features: closed-form functions of the raw inputs
 * appended to the network input, optionally with trainable parameters.
 */

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pinn/autodiff.hpp"
#include "pinn/expression.hpp"

namespace pinn {

struct FeatureDef {
  std::string name;
  std::string expression;
  /// Trainable parameters as (name, initial value). Empty for a fixed feature.
  std::vector<std::pair<std::string, double>> parameters;

  bool learnable() const { return !parameters.empty(); }
};

/// Named presets: poisson_sine, poisson_sine_learnable, poisson2_forcing,
/// burgers_ic, ocp_bubble, parametric_gaussian.
FeatureDef feature_preset(const std::string& name);
std::vector<std::string> feature_preset_names();

class FeatureSet {
 public:
  FeatureSet() = default;

  /**
   * Parses every definition against `input_names` (plus its own parameter
   * names) and registers learnable parameters as fresh variables of `graph`.
   * Throws ParseError on an unknown name, std::invalid_argument on a
   * duplicate parameter name.
   */
  FeatureSet(ad::Graph& graph, std::vector<FeatureDef> defs, std::vector<std::string> input_names);

  std::size_t size() const { return defs_.size(); }
  bool empty() const { return defs_.empty(); }
  const std::vector<FeatureDef>& definitions() const { return defs_; }
  const std::vector<std::string>& input_names() const { return input_names_; }

  /// Inputs followed by one Expr per feature; `inputs` follows input_names().
  std::vector<ad::Expr> augment(std::span<const ad::Expr> inputs) const;

  /// Every learnable parameter with its initial value, in definition order.
  std::vector<std::pair<ad::VarId, double>> feature_params() const;

 private:
  ad::Graph* graph_ = nullptr;
  std::vector<FeatureDef> defs_;
  std::vector<std::string> input_names_;
  std::vector<ParsedExpression> parsed_;
  // Per feature: parameter name -> VarId, aligned with defs_[i].parameters.
  std::vector<std::vector<ad::VarId>> param_vars_;
};

}  // namespace pinn
