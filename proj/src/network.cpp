#include "pinn/network.hpp"

#include <cmath>
#include <stdexcept>

#include "pinn/rng.hpp"

namespace pinn {

Activation parse_activation(const std::string& name) {
  if (name == "softplus") return Activation::Softplus;
  if (name == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation '" + name + "' (expected softplus or tanh)");
}

std::string to_string(Activation a) { return a == Activation::Softplus ? "softplus" : "tanh"; }

void NetworkSpec::validate() const {
  if (inputs == 0) throw std::invalid_argument("NetworkSpec: input dimension must be positive");
  if (outputs == 0) throw std::invalid_argument("NetworkSpec: output dimension must be positive");
  for (auto w : hidden) {
    if (w == 0) throw std::invalid_argument("NetworkSpec: hidden widths must be >= 1");
  }
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t count = 0;
  std::size_t in = inputs;
  for (auto w : hidden) {
    count += (in + 1) * w;
    in = w;
  }
  return count + (in + 1) * outputs;
}

std::vector<Network::Layer> Network::layers() const {
  std::vector<Layer> out;
  std::size_t in = spec_.inputs;
  std::size_t offset = 0;
  auto push = [&](std::size_t width) {
    out.push_back({in, width, offset});
    offset += (in + 1) * width;
    in = width;
  };
  for (auto w : spec_.hidden) push(w);
  push(spec_.outputs);
  return out;
}

Network Network::init(const NetworkSpec& spec, ad::Graph& graph, const std::string& prefix) {
  spec.validate();
  Network net(spec, graph);
  SplitMix64 rng(spec.seed);
  net.params_.reserve(spec.parameter_count());
  std::size_t index = 0;
  for (const auto& layer : net.layers()) {
    const double bound = std::sqrt(1.0 / static_cast<double>(layer.in));
    for (std::size_t k = 0; k < layer.in * layer.out; ++k) net.params_.push_back(rng.uniform(-bound, bound));
    for (std::size_t k = 0; k < layer.out; ++k) net.params_.push_back(0.0);
  }
  for (std::size_t k = 0; k < net.params_.size(); ++k) {
    net.param_vars_.push_back(graph.var_id(graph.variable(prefix + ".p" + std::to_string(index++))));
  }
  return net;
}

void Network::set_parameters(std::span<const double> values) {
  if (values.size() != params_.size()) throw std::invalid_argument("Network::set_parameters: size mismatch");
  std::copy(values.begin(), values.end(), params_.begin());
}

std::vector<double> Network::forward(std::span<const double> input) const {
  if (input.size() != spec_.inputs) {
    throw std::invalid_argument("Network::forward: expected " + std::to_string(spec_.inputs) + " inputs, got " +
                                std::to_string(input.size()));
  }
  const auto all = layers();
  std::vector<double> current(input.begin(), input.end());
  std::vector<double> next;
  for (std::size_t li = 0; li < all.size(); ++li) {
    const auto& layer = all[li];
    const double* w = params_.data() + layer.offset;
    const double* b = w + layer.in * layer.out;
    next.assign(layer.out, 0.0);
    for (std::size_t i = 0; i < layer.out; ++i) {
      // Same accumulation order as the graph's n-ary sum: w0*x0 + w1*x1 + ... + b.
      double acc = w[i * layer.in] * current[0];
      for (std::size_t j = 1; j < layer.in; ++j) acc += w[i * layer.in + j] * current[j];
      acc += b[i];
      if (li + 1 < all.size()) {
        acc = spec_.activation == Activation::Softplus ? ad::softplus_value(acc) : std::tanh(acc);
      }
      next[i] = acc;
    }
    current.swap(next);
  }
  return current;
}

std::vector<ad::Expr> Network::forward_graph(std::span<const ad::Expr> inputs) const {
  if (inputs.size() != spec_.inputs) {
    throw std::invalid_argument("Network::forward_graph: expected " + std::to_string(spec_.inputs) +
                                " inputs, got " + std::to_string(inputs.size()));
  }
  auto& g = *graph_;
  const auto all = layers();
  std::vector<ad::Expr> current(inputs.begin(), inputs.end());
  std::vector<ad::Expr> terms;
  for (std::size_t li = 0; li < all.size(); ++li) {
    const auto& layer = all[li];
    std::vector<ad::Expr> next;
    next.reserve(layer.out);
    for (std::size_t i = 0; i < layer.out; ++i) {
      terms.clear();
      for (std::size_t j = 0; j < layer.in; ++j) {
        terms.push_back(g.mul(g.variable(param_vars_[layer.offset + i * layer.in + j]), current[j]));
      }
      terms.push_back(g.variable(param_vars_[layer.offset + layer.in * layer.out + i]));
      ad::Expr pre = g.sum(terms);
      if (li + 1 < all.size()) {
        pre = spec_.activation == Activation::Softplus ? ad::softplus(pre) : ad::tanh(pre);
      }
      next.push_back(pre);
    }
    current = std::move(next);
  }
  return current;
}

std::vector<ad::Expr> Network::forward_graph(std::span<const ad::VarId> inputs) const {
  std::vector<ad::Expr> exprs;
  exprs.reserve(inputs.size());
  for (auto v : inputs) exprs.push_back(graph_->variable(v));
  return forward_graph(exprs);
}

nlohmann::json parameters_to_json(std::span<const double> params) {
  return nlohmann::json(std::vector<double>(params.begin(), params.end()));
}

std::vector<double> parameters_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("parameter checkpoint must be a JSON array");
  return j.get<std::vector<double>>();
}

}  // namespace pinn
