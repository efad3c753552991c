#pragma once
/**
 * @file piarch.hpp
 * @brief Composed architectures: a base network produces the first group of
 * fields, relation stages produce the rest from earlier fields and raw inputs.
 */

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pinn/autodiff.hpp"
#include "pinn/expression.hpp"
#include "pinn/network.hpp"

namespace pinn {

struct Problem;

/// One relation stage. Either `expression` (closed form over `inputs`) or,
/// when `network` is set, a trainable network mapping `inputs` to the output.
struct RelationXi {
  std::string output;
  std::vector<std::string> inputs;
  std::string expression;
  std::optional<NetworkSpec> network;
};

class ComposedModel {
 public:
  /**
   * `base_fields` names the base network outputs in order; `fields` is the
   * full output order the model exposes; `raw_names` are the non-field names
   * (coordinates, parameters) relations may read. Throws std::invalid_argument
   * when a field is uncovered or covered twice, or a relation reads a name that
   * is neither raw nor produced by an earlier stage.
   */
  static ComposedModel compose(const NetworkSpec& base, std::vector<std::string> base_fields,
                               std::vector<RelationXi> relations, std::vector<std::string> fields,
                               std::vector<std::string> raw_names, ad::Graph& graph);

  const std::vector<std::string>& fields() const { return fields_; }
  const std::vector<std::string>& base_fields() const { return base_fields_; }
  const std::vector<RelationXi>& relations() const { return relations_; }
  const Network& base() const { return base_; }
  bool flat() const { return relations_.empty(); }

  /// Every trainable parameter: base network, then relation networks in stage order.
  std::size_t parameter_count() const;
  std::vector<ad::VarId> parameter_vars() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);

  /// Fields in fields() order. `net_inputs` feed the base network, `raw`
  /// follows raw_names.
  std::vector<ad::Expr> forward_graph(std::span<const ad::Expr> net_inputs, std::span<const ad::Expr> raw) const;
  std::vector<double> forward(std::span<const double> net_inputs, std::span<const double> raw) const;

 private:
  ComposedModel(Network base) : base_(std::move(base)) {}

  struct Stage {
    std::vector<std::size_t> sources;  // index into fields_ or, offset by fields_.size(), raw_names_
    std::optional<ParsedExpression> expression;
    std::optional<Network> network;
    // Closed form compiled over its own variables for numeric evaluation.
    std::shared_ptr<ad::Graph> scratch;
    std::vector<ad::VarId> scratch_vars;
    ad::Expr scratch_root;
  };

  Network base_;
  std::vector<std::string> base_fields_;
  std::vector<RelationXi> relations_;
  std::vector<std::string> fields_;
  std::vector<std::string> raw_names_;
  std::vector<Stage> stages_;
  std::vector<std::size_t> base_slot_;  // base output k -> fields_ index
  std::vector<std::size_t> stage_slot_;
};

/// Relations a problem declares, as closed-form stages (or networks when `learned`).
std::vector<RelationXi> problem_relations(const Problem& problem, bool learned, std::uint64_t seed,
                                          const std::vector<std::size_t>& hidden, Activation activation);

/// Fields of `problem` produced by the base network under the given relations.
std::vector<std::string> base_fields_for(const Problem& problem, const std::vector<RelationXi>& relations);

/**
 * Max over points of |relation(fields) - related field| for every relation the
 * problem declares. `fields_at(x, mu)` returns all fields in problem order.
 */
double relation_violation(
    const Problem& problem,
    const std::function<std::vector<double>(std::span<const double>, std::span<const double>)>& fields_at,
    std::span<const double> points, std::size_t dim, std::span<const double> mu);

}  // namespace pinn
