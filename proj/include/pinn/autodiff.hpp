#pragma once
/**
 * @file autodiff.hpp
 * @brief Symbolic scalar expression graphs with nested differentiation.
 *
 * A Graph is an append-only arena of hash-consed nodes. Expr is a cheap
 * handle into it. derive() builds a new Expr for the partial derivative, so
 * derivatives of derivatives work the same way as first derivatives.
 *
 * Numeric work goes through Program (a topologically ordered instruction
 * list compiled from a set of roots) and Workspace, which evaluates a
 * Program over a batch of lanes and runs the reverse sweep for gradients.
 */

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace pinn::ad {

struct VarId {
  std::uint32_t value = 0;
  friend bool operator==(VarId, VarId) = default;
  friend auto operator<=>(VarId, VarId) = default;
};

}  // namespace pinn::ad

template <>
struct std::hash<pinn::ad::VarId> {
  std::size_t operator()(pinn::ad::VarId v) const noexcept { return std::hash<std::uint32_t>{}(v.value); }
};

namespace pinn::ad {

using NodeId = std::uint32_t;

enum class Op : std::uint8_t {
  Constant,
  Variable,
  Sum,      // n-ary
  Product,  // binary
  Power,    // child ^ constant exponent
  Exp,
  Log,
  Sin,
  Cos,
  Tanh,
  Softplus,
  Sigmoid,
};

class Graph;

/// Handle to a node of a Graph. Copyable; valid as long as its Graph lives.
class Expr {
 public:
  Expr() = default;
  Expr(Graph* graph, NodeId id) : graph_(graph), id_(id) {}

  Graph& graph() const;
  NodeId id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  Op op() const;
  bool is_constant() const;
  bool is_constant(double value) const;
  /// Value of a Constant node; throws for other kinds.
  double constant_value() const;

  friend bool operator==(const Expr& a, const Expr& b) { return a.graph_ == b.graph_ && a.id_ == b.id_; }

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = 0;
};

class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Expr constant(double value);
  Expr zero() { return constant(0.0); }
  Expr one() { return constant(1.0); }

  /// Creates a fresh variable with a unique VarId.
  Expr variable(std::string name);
  Expr variable(VarId id) const;
  VarId var_id(Expr e) const;
  const std::string& var_name(VarId id) const;
  std::size_t variable_count() const { return var_nodes_.size(); }

  Expr sum(std::span<const Expr> terms);
  Expr add(Expr a, Expr b);
  Expr mul(Expr a, Expr b);
  Expr pow(Expr base, double exponent);
  Expr unary(Op op, Expr arg);

  /// Partial derivative as a new graph. Memoized per (node, variable).
  Expr derive(Expr e, VarId wrt);

  std::size_t node_count() const { return nodes_.size(); }

  struct Node {
    Op op;
    std::uint32_t first = 0;  // offset into operand pool
    std::uint32_t count = 0;  // operand count
    std::uint32_t var = 0;    // Variable nodes only
    double scalar = 0.0;      // Constant value or Power exponent
  };
  const Node& node(NodeId id) const { return nodes_[id]; }
  std::span<const NodeId> operands(NodeId id) const {
    const Node& n = nodes_[id];
    return {operand_pool_.data() + n.first, n.count};
  }

 private:
  NodeId intern(Op op, std::span<const NodeId> children, double scalar, std::uint32_t var);
  NodeId derive_node(NodeId id, VarId wrt);
  Expr wrap(NodeId id) { return Expr(this, id); }

  std::vector<Node> nodes_;
  std::vector<NodeId> operand_pool_;
  std::vector<NodeId> var_nodes_;
  std::vector<std::string> var_names_;

  struct KeyHash {
    std::size_t operator()(const std::vector<std::uint64_t>& k) const noexcept;
  };
  std::unordered_map<std::vector<std::uint64_t>, NodeId, KeyHash> intern_table_;
  std::unordered_map<std::uint64_t, NodeId> derive_memo_;
};

// Builders. Mixed Expr/double overloads promote the double to a constant.
Expr operator+(Expr a, Expr b);
Expr operator-(Expr a, Expr b);
Expr operator*(Expr a, Expr b);
Expr operator/(Expr a, Expr b);
Expr operator-(Expr a);
Expr operator+(Expr a, double b);
Expr operator+(double a, Expr b);
Expr operator-(Expr a, double b);
Expr operator-(double a, Expr b);
Expr operator*(Expr a, double b);
Expr operator*(double a, Expr b);
Expr operator/(Expr a, double b);
Expr operator/(double a, Expr b);

Expr pow(Expr base, double exponent);
Expr square(Expr e);
Expr exp(Expr e);
Expr log(Expr e);
Expr sin(Expr e);
Expr cos(Expr e);
Expr tanh(Expr e);
Expr softplus(Expr e);
Expr sigmoid(Expr e);

/// Scalar kernels shared by graph evaluation and the numeric network pass.
double softplus_value(double x);
double sigmoid_value(double x);

Expr derive(Expr e, VarId wrt);
/// derive(e, wrt) applied `order` times.
Expr derive(Expr e, VarId wrt, int order);

using Bindings = std::unordered_map<VarId, double>;

class MissingBinding : public std::runtime_error {
 public:
  MissingBinding(VarId id, const std::string& name);
  VarId var() const { return var_; }

 private:
  VarId var_;
};

/// Variables reachable from the roots, in ascending VarId order.
std::vector<VarId> reachable_variables(std::span<const Expr> roots);

double evaluate(Expr e, const Bindings& bindings);
std::vector<double> evaluate(std::span<const Expr> roots, const Bindings& bindings);

/// All first partials of e at the bound point in one reverse sweep.
std::vector<double> gradient(Expr e, std::span<const VarId> wrt, const Bindings& bindings);

/// Max over the reachable variables of |central difference - derive()|.
double fd_check(Expr e, const Bindings& bindings, double step);

/**
 * @brief Flattened, topologically sorted instruction list for a set of roots.
 *
 * The caller lists the variables it intends to feed. Any variable reachable
 * from the roots but absent from that list makes construction throw
 * MissingBinding. Immutable after construction.
 */
class Program {
 public:
  /// Inputs at index >= uniform_from hold one value for every lane and may
  /// only be set through Workspace::set_uniform.
  Program(std::span<const Expr> roots, std::span<const VarId> inputs,
          std::size_t uniform_from = static_cast<std::size_t>(-1));

  std::size_t slot_count() const { return ops_.size(); }
  std::size_t root_count() const { return root_slots_.size(); }
  std::size_t input_count() const { return input_slots_.size(); }

  /// Slot of the i-th declared input, or npos if the roots do not use it.
  static constexpr std::uint32_t npos = 0xffffffffu;
  std::uint32_t input_slot(std::size_t i) const { return input_slots_[i]; }
  std::uint32_t root_slot(std::size_t i) const { return root_slots_[i]; }

 private:
  friend class Workspace;
  // A Sum whose product operands are used nowhere else runs as one fused
  // instruction; its operands are (tag, a, b) triples, see Term.
  enum Term : std::uint32_t { Plain, Pair, UniformLeft, UniformBoth };
  std::vector<Op> ops_;
  std::vector<std::uint8_t> fused_;
  std::vector<std::uint8_t> uniform_slot_;
  std::vector<std::uint32_t> first_;
  std::vector<std::uint32_t> count_;
  std::vector<double> scalar_;
  std::vector<std::uint32_t> operands_;
  std::vector<std::uint32_t> root_slots_;
  std::vector<std::uint32_t> input_slots_;
};

/**
 * @brief Per-thread evaluation buffers for a Program over up to `lanes` points.
 *
 * Values and adjoints are stored slot-major so every instruction is a tight
 * loop across lanes.
 */
class Workspace {
 public:
  Workspace(const Program& program, std::size_t lanes);

  std::size_t lanes() const { return lanes_; }

  /// Sets input i on every lane.
  void set_uniform(std::size_t input, double value);
  /// Sets input i per lane; values.size() must not exceed lanes().
  void set_lanes(std::size_t input, std::span<const double> values);

  void forward();
  double root(std::size_t r, std::size_t lane = 0) const;

  /// Reverse sweep seeded with `seed[lane]` on root r (other roots get 0).
  void backward(std::size_t r, std::span<const double> seed);
  /// Adjoint of input i summed across lanes after backward().
  double input_adjoint_sum(std::size_t input) const;
  double input_adjoint(std::size_t input, std::size_t lane) const;

 private:
  const Program* program_;
  std::size_t lanes_;
  std::vector<double> values_;
  std::vector<double> adjoints_;
};

}  // namespace pinn::ad
