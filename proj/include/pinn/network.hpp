#pragma once
/**
 * @file network.hpp
 * @brief Dense feed-forward networks whose parameters live as variables in an
 * autodiff Graph, with a plain numeric forward pass alongside.
 */

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pinn/autodiff.hpp"

namespace pinn {

enum class Activation { Softplus, Tanh };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

/// Hidden widths count hidden layers only: "3 layers of 20 neurons" is {20, 20, 20}.
struct NetworkSpec {
  std::size_t inputs = 0;
  std::vector<std::size_t> hidden;
  std::size_t outputs = 1;
  Activation activation = Activation::Softplus;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t parameter_count() const;
};

class Network {
 public:
  /// Weights ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)) from SplitMix64(seed); biases zero.
  static Network init(const NetworkSpec& spec, ad::Graph& graph, const std::string& prefix = "net");

  const NetworkSpec& spec() const { return spec_; }
  std::size_t parameter_count() const { return params_.size(); }

  /// Layer-major; per layer the row-major (outputs x inputs) weights, then biases.
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  void set_parameters(std::span<const double> values);
  std::span<const ad::VarId> parameter_vars() const { return param_vars_; }

  std::vector<double> forward(std::span<const double> input) const;
  std::vector<ad::Expr> forward_graph(std::span<const ad::Expr> inputs) const;
  std::vector<ad::Expr> forward_graph(std::span<const ad::VarId> inputs) const;

  ad::Graph& graph() const { return *graph_; }

 private:
  Network(const NetworkSpec& spec, ad::Graph& graph) : spec_(spec), graph_(&graph) {}

  struct Layer {
    std::size_t in;
    std::size_t out;
    std::size_t offset;  // first weight in params_
  };
  std::vector<Layer> layers() const;

  NetworkSpec spec_;
  ad::Graph* graph_;
  std::vector<double> params_;
  std::vector<ad::VarId> param_vars_;
};

/// Checkpoint format: a flat JSON array in parameter order.
nlohmann::json parameters_to_json(std::span<const double> params);
std::vector<double> parameters_from_json(const nlohmann::json& j);

}  // namespace pinn
