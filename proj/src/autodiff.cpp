#include "pinn/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace pinn::ad {

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

double apply_unary(Op op, double x) {
  switch (op) {
    case Op::Exp: return std::exp(x);
    case Op::Log: return std::log(x);
    case Op::Sin: return std::sin(x);
    case Op::Cos: return std::cos(x);
    case Op::Tanh: return std::tanh(x);
    case Op::Softplus: return softplus_value(x);
    case Op::Sigmoid: return sigmoid_value(x);
    default: throw std::logic_error("apply_unary: not a unary op");
  }
}

double apply_power(double x, double c) {
  if (c == 2.0) return x * x;
  if (c == -1.0) return 1.0 / x;
  if (c == 0.5) return std::sqrt(x);
  return std::pow(x, c);
}

// d(x^c)/dx
double power_slope(double x, double c) {
  if (c == 2.0) return 2.0 * x;
  if (c == -1.0) return -1.0 / (x * x);
  return c * std::pow(x, c - 1.0);
}

bool is_unary(Op op) {
  return op == Op::Exp || op == Op::Log || op == Op::Sin || op == Op::Cos || op == Op::Tanh ||
         op == Op::Softplus || op == Op::Sigmoid;
}

}  // namespace

// ---------------------------------------------------------------------------
// Expr

Graph& Expr::graph() const {
  if (!graph_) throw std::logic_error("Expr: null handle");
  return *graph_;
}

Op Expr::op() const { return graph().node(id_).op; }

bool Expr::is_constant() const { return op() == Op::Constant; }

bool Expr::is_constant(double value) const {
  const auto& n = graph().node(id_);
  return n.op == Op::Constant && n.scalar == value;
}

double Expr::constant_value() const {
  const auto& n = graph().node(id_);
  if (n.op != Op::Constant) throw std::logic_error("Expr::constant_value on a non-constant node");
  return n.scalar;
}

// ---------------------------------------------------------------------------
// Graph

std::size_t Graph::KeyHash::operator()(const std::vector<std::uint64_t>& k) const noexcept {
  std::uint64_t h = 0x9e3779b97f4a7c15ull;
  for (auto w : k) {
    h ^= w + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  return static_cast<std::size_t>(h);
}

Graph::Graph() { nodes_.reserve(1024); }

NodeId Graph::intern(Op op, std::span<const NodeId> children, double scalar, std::uint32_t var) {
  std::vector<std::uint64_t> key;
  key.reserve(children.size() + 3);
  key.push_back(static_cast<std::uint64_t>(op));
  key.push_back(std::bit_cast<std::uint64_t>(scalar));
  key.push_back(var);
  for (auto c : children) key.push_back(c);
  if (auto it = intern_table_.find(key); it != intern_table_.end()) return it->second;

  Node n{op, static_cast<std::uint32_t>(operand_pool_.size()), static_cast<std::uint32_t>(children.size()), var,
         scalar};
  operand_pool_.insert(operand_pool_.end(), children.begin(), children.end());
  const auto id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(n);
  intern_table_.emplace(std::move(key), id);
  return id;
}

Expr Graph::constant(double value) { return wrap(intern(Op::Constant, {}, value, 0)); }

Expr Graph::variable(std::string name) {
  const auto var = static_cast<std::uint32_t>(var_nodes_.size());
  const NodeId id = intern(Op::Variable, {}, 0.0, var);
  var_nodes_.push_back(id);
  var_names_.push_back(std::move(name));
  return wrap(id);
}

Expr Graph::variable(VarId id) const {
  if (id.value >= var_nodes_.size()) throw std::out_of_range("Graph::variable: unknown VarId");
  return Expr(const_cast<Graph*>(this), var_nodes_[id.value]);
}

VarId Graph::var_id(Expr e) const {
  const auto& n = nodes_.at(e.id());
  if (n.op != Op::Variable) throw std::invalid_argument("Graph::var_id: expression is not a variable");
  return VarId{n.var};
}

const std::string& Graph::var_name(VarId id) const { return var_names_.at(id.value); }

Expr Graph::sum(std::span<const Expr> terms) {
  std::vector<NodeId> kept;
  kept.reserve(terms.size());
  bool all_constant = true;
  for (const auto& t : terms) {
    const auto& n = nodes_[t.id()];
    if (n.op == Op::Constant && n.scalar == 0.0) continue;
    if (n.op != Op::Constant) all_constant = false;
    kept.push_back(t.id());
  }
  if (kept.empty()) return zero();
  if (kept.size() == 1) return wrap(kept.front());
  if (all_constant) {
    double acc = nodes_[kept[0]].scalar;
    for (std::size_t i = 1; i < kept.size(); ++i) acc += nodes_[kept[i]].scalar;
    return constant(acc);
  }
  return wrap(intern(Op::Sum, kept, 0.0, 0));
}

Expr Graph::add(Expr a, Expr b) {
  const Expr terms[] = {a, b};
  return sum(terms);
}

Expr Graph::mul(Expr a, Expr b) {
  const auto& na = nodes_[a.id()];
  const auto& nb = nodes_[b.id()];
  if (na.op == Op::Constant && nb.op == Op::Constant) return constant(na.scalar * nb.scalar);
  if ((na.op == Op::Constant && na.scalar == 0.0) || (nb.op == Op::Constant && nb.scalar == 0.0)) return zero();
  if (na.op == Op::Constant && na.scalar == 1.0) return b;
  if (nb.op == Op::Constant && nb.scalar == 1.0) return a;
  const NodeId children[] = {a.id(), b.id()};
  return wrap(intern(Op::Product, children, 0.0, 0));
}

Expr Graph::pow(Expr base, double exponent) {
  if (exponent == 1.0) return base;
  if (exponent == 0.0) return one();
  const auto& n = nodes_[base.id()];
  if (n.op == Op::Constant) return constant(apply_power(n.scalar, exponent));
  const NodeId children[] = {base.id()};
  return wrap(intern(Op::Power, children, exponent, 0));
}

Expr Graph::unary(Op op, Expr arg) {
  if (!is_unary(op)) throw std::invalid_argument("Graph::unary: not a unary op");
  const auto& n = nodes_[arg.id()];
  if (n.op == Op::Constant) return constant(apply_unary(op, n.scalar));
  const NodeId children[] = {arg.id()};
  return wrap(intern(op, children, 0.0, 0));
}

Expr Graph::derive(Expr e, VarId wrt) {
  if (&e.graph() != this) throw std::invalid_argument("Graph::derive: expression belongs to another graph");
  return wrap(derive_node(e.id(), wrt));
}

NodeId Graph::derive_node(NodeId id, VarId wrt) {
  const std::uint64_t memo_key = (static_cast<std::uint64_t>(id) << 32) | wrt.value;
  if (auto it = derive_memo_.find(memo_key); it != derive_memo_.end()) return it->second;

  // Copy: recursion below may grow nodes_ and invalidate references.
  const Node n = nodes_[id];
  const std::vector<NodeId> ch(operand_pool_.begin() + n.first, operand_pool_.begin() + n.first + n.count);
  Expr self = wrap(id);
  Expr result;

  switch (n.op) {
    case Op::Constant:
      result = zero();
      break;
    case Op::Variable:
      result = n.var == wrt.value ? one() : zero();
      break;
    case Op::Sum: {
      std::vector<Expr> parts;
      parts.reserve(ch.size());
      for (auto c : ch) parts.push_back(wrap(derive_node(c, wrt)));
      result = sum(parts);
      break;
    }
    case Op::Product: {
      Expr a = wrap(ch[0]);
      Expr b = wrap(ch[1]);
      Expr da = wrap(derive_node(ch[0], wrt));
      Expr db = wrap(derive_node(ch[1], wrt));
      result = add(mul(da, b), mul(a, db));
      break;
    }
    case Op::Power: {
      Expr a = wrap(ch[0]);
      Expr da = wrap(derive_node(ch[0], wrt));
      if (da.is_constant(0.0)) {
        result = zero();
        break;
      }
      result = mul(mul(constant(n.scalar), pow(a, n.scalar - 1.0)), da);
      break;
    }
    default: {
      Expr a = wrap(ch[0]);
      Expr da = wrap(derive_node(ch[0], wrt));
      if (da.is_constant(0.0)) {
        result = zero();
        break;
      }
      Expr slope;
      switch (n.op) {
        case Op::Exp: slope = self; break;
        case Op::Log: slope = pow(a, -1.0); break;
        case Op::Sin: slope = unary(Op::Cos, a); break;
        case Op::Cos: slope = mul(constant(-1.0), unary(Op::Sin, a)); break;
        case Op::Tanh: slope = add(one(), mul(constant(-1.0), mul(self, self))); break;
        case Op::Softplus: slope = unary(Op::Sigmoid, a); break;
        case Op::Sigmoid: slope = mul(self, add(one(), mul(constant(-1.0), self))); break;
        default: throw std::logic_error("Graph::derive: unhandled op");
      }
      result = mul(slope, da);
      break;
    }
  }
  derive_memo_.emplace(memo_key, result.id());
  return result.id();
}

// ---------------------------------------------------------------------------
// Free builders

namespace {
Graph& common_graph(const Expr& a, const Expr& b) {
  if (&a.graph() != &b.graph()) throw std::invalid_argument("expressions belong to different graphs");
  return a.graph();
}
}  // namespace

Expr operator+(Expr a, Expr b) { return common_graph(a, b).add(a, b); }
Expr operator-(Expr a, Expr b) { return common_graph(a, b).add(a, -b); }
Expr operator*(Expr a, Expr b) { return common_graph(a, b).mul(a, b); }
Expr operator/(Expr a, Expr b) { return common_graph(a, b).mul(a, b.graph().pow(b, -1.0)); }
Expr operator-(Expr a) { return a.graph().mul(a.graph().constant(-1.0), a); }
Expr operator+(Expr a, double b) { return a + a.graph().constant(b); }
Expr operator+(double a, Expr b) { return b.graph().constant(a) + b; }
Expr operator-(Expr a, double b) { return a + a.graph().constant(-b); }
Expr operator-(double a, Expr b) { return b.graph().constant(a) - b; }
Expr operator*(Expr a, double b) { return a.graph().constant(b) * a; }
Expr operator*(double a, Expr b) { return b.graph().constant(a) * b; }
Expr operator/(Expr a, double b) { return a * (1.0 / b); }
Expr operator/(double a, Expr b) { return b.graph().constant(a) / b; }

Expr pow(Expr base, double exponent) { return base.graph().pow(base, exponent); }
Expr square(Expr e) { return e * e; }
Expr exp(Expr e) { return e.graph().unary(Op::Exp, e); }
Expr log(Expr e) { return e.graph().unary(Op::Log, e); }
Expr sin(Expr e) { return e.graph().unary(Op::Sin, e); }
Expr cos(Expr e) { return e.graph().unary(Op::Cos, e); }
Expr tanh(Expr e) { return e.graph().unary(Op::Tanh, e); }
Expr softplus(Expr e) { return e.graph().unary(Op::Softplus, e); }
Expr sigmoid(Expr e) { return e.graph().unary(Op::Sigmoid, e); }

Expr derive(Expr e, VarId wrt) { return e.graph().derive(e, wrt); }

Expr derive(Expr e, VarId wrt, int order) {
  for (int i = 0; i < order; ++i) e = derive(e, wrt);
  return e;
}

// ---------------------------------------------------------------------------
// Convenience evaluation

MissingBinding::MissingBinding(VarId id, const std::string& name)
    : std::runtime_error("missing binding for variable " + std::to_string(id.value) + " ('" + name + "')"),
      var_(id) {}

std::vector<VarId> reachable_variables(std::span<const Expr> roots) {
  if (roots.empty()) return {};
  const Graph& g = roots.front().graph();
  std::vector<char> seen(g.node_count(), 0);
  std::vector<NodeId> stack;
  std::vector<VarId> vars;
  for (const auto& r : roots) stack.push_back(r.id());
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    if (seen[id]) continue;
    seen[id] = 1;
    const auto& n = g.node(id);
    if (n.op == Op::Variable) vars.push_back(VarId{n.var});
    for (auto c : g.operands(id)) stack.push_back(c);
  }
  std::sort(vars.begin(), vars.end());
  return vars;
}

namespace {

struct BoundProgram {
  std::vector<VarId> vars;
  Program program;
  Workspace ws;

  BoundProgram(std::span<const Expr> roots, const Bindings& bindings)
      : vars(reachable_variables(roots)), program(roots, check(roots, vars, bindings)), ws(program, 1) {
    for (std::size_t i = 0; i < vars.size(); ++i) ws.set_uniform(i, bindings.at(vars[i]));
  }

  static std::span<const VarId> check(std::span<const Expr> roots, const std::vector<VarId>& vars,
                                      const Bindings& bindings) {
    for (auto v : vars) {
      if (!bindings.contains(v)) throw MissingBinding(v, roots.front().graph().var_name(v));
    }
    return vars;
  }
};

}  // namespace

std::vector<double> evaluate(std::span<const Expr> roots, const Bindings& bindings) {
  if (roots.empty()) return {};
  BoundProgram bp(roots, bindings);
  bp.ws.forward();
  std::vector<double> out(roots.size());
  for (std::size_t i = 0; i < roots.size(); ++i) out[i] = bp.ws.root(i);
  return out;
}

double evaluate(Expr e, const Bindings& bindings) {
  const Expr roots[] = {e};
  return evaluate(roots, bindings).front();
}

std::vector<double> gradient(Expr e, std::span<const VarId> wrt, const Bindings& bindings) {
  const Expr roots[] = {e};
  BoundProgram bp(roots, bindings);
  bp.ws.forward();
  const double seed[] = {1.0};
  bp.ws.backward(0, seed);
  std::vector<double> out(wrt.size(), 0.0);
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto it = std::lower_bound(bp.vars.begin(), bp.vars.end(), wrt[k]);
    if (it != bp.vars.end() && *it == wrt[k]) out[k] = bp.ws.input_adjoint_sum(it - bp.vars.begin());
  }
  return out;
}

double fd_check(Expr e, const Bindings& bindings, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("fd_check: step must be positive");
  const Expr roots[] = {e};
  const auto vars = reachable_variables(roots);
  double worst = 0.0;
  for (auto v : vars) {
    const double analytic = evaluate(derive(e, v), bindings);
    Bindings shifted = bindings;
    const double x = bindings.at(v);
    shifted[v] = x + step;
    const double up = evaluate(e, shifted);
    shifted[v] = x - step;
    const double down = evaluate(e, shifted);
    worst = std::max(worst, std::abs((up - down) / (2.0 * step) - analytic));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Program

Program::Program(std::span<const Expr> roots, std::span<const VarId> inputs, std::size_t uniform_from) {
  if (roots.empty()) throw std::invalid_argument("Program: no roots");
  const Graph& g = roots.front().graph();
  for (const auto& r : roots) {
    if (&r.graph() != &g) throw std::invalid_argument("Program: roots span several graphs");
  }

  // Iterative post-order DFS gives a topological order.
  constexpr std::uint32_t unvisited = 0xffffffffu;
  std::vector<std::uint32_t> slot_of(g.node_count(), unvisited);
  std::vector<char> seen(g.node_count(), 0);
  std::vector<NodeId> order;
  std::vector<std::pair<NodeId, std::uint32_t>> stack;
  for (const auto& r : roots) {
    if (seen[r.id()]) continue;
    seen[r.id()] = 1;
    stack.emplace_back(r.id(), 0);
    while (!stack.empty()) {
      auto& [id, next] = stack.back();
      const auto ops = g.operands(id);
      if (next < ops.size()) {
        const NodeId c = ops[next++];
        if (!seen[c]) {
          seen[c] = 1;
          stack.emplace_back(c, 0);
        }
        continue;
      }
      order.push_back(id);
      stack.pop_back();
    }
  }

  std::unordered_map<std::uint32_t, std::size_t> input_index;
  for (std::size_t i = 0; i < inputs.size(); ++i) input_index.emplace(inputs[i].value, i);
  input_slots_.assign(inputs.size(), npos);

  std::vector<std::uint32_t> uses(g.node_count(), 0);
  for (const NodeId id : order) {
    for (auto c : g.operands(id)) ++uses[c];
  }
  for (const auto& r : roots) ++uses[r.id()];
  std::vector<char> uniform(g.node_count(), 0);
  for (const NodeId id : order) {
    const auto& n = g.node(id);
    if (n.op != Op::Variable) continue;
    auto it = input_index.find(n.var);
    if (it == input_index.end()) throw MissingBinding(VarId{n.var}, g.var_name(VarId{n.var}));
    if (it->second >= uniform_from) uniform[id] = 1;
  }
  // Products consumed only by one sum are folded into it.
  std::vector<char> absorbed(g.node_count(), 0);
  for (const NodeId id : order) {
    if (g.node(id).op != Op::Sum) continue;
    for (auto c : g.operands(id)) {
      if (g.node(c).op == Op::Product && uses[c] == 1) absorbed[c] = 1;
    }
  }

  std::uint32_t next_slot = 0;
  for (const NodeId id : order) {
    if (!absorbed[id]) slot_of[id] = next_slot++;
  }
  ops_.reserve(next_slot);
  for (const NodeId id : order) {
    if (absorbed[id]) continue;
    const auto& n = g.node(id);
    const auto slot = static_cast<std::uint32_t>(ops_.size());
    ops_.push_back(n.op);
    scalar_.push_back(n.scalar);
    first_.push_back(static_cast<std::uint32_t>(operands_.size()));
    count_.push_back(n.count);
    uniform_slot_.push_back(uniform[id]);
    const auto args = g.operands(id);
    const bool fuse = n.op == Op::Sum && std::any_of(args.begin(), args.end(), [&](NodeId c) { return absorbed[c]; });
    fused_.push_back(fuse ? 1 : 0);
    if (fuse) {
      for (auto c : args) {
        if (!absorbed[c]) {
          operands_.insert(operands_.end(), {Plain, slot_of[c], slot_of[c]});
          continue;
        }
        const auto pa = g.operands(c)[0];
        const auto pb = g.operands(c)[1];
        if (uniform[pa] && uniform[pb]) {
          operands_.insert(operands_.end(), {UniformBoth, slot_of[pa], slot_of[pb]});
        } else if (uniform[pa]) {
          operands_.insert(operands_.end(), {UniformLeft, slot_of[pa], slot_of[pb]});
        } else if (uniform[pb]) {
          operands_.insert(operands_.end(), {UniformLeft, slot_of[pb], slot_of[pa]});
        } else {
          operands_.insert(operands_.end(), {Pair, slot_of[pa], slot_of[pb]});
        }
      }
    } else {
      for (auto c : args) operands_.push_back(slot_of[c]);
    }
    if (n.op == Op::Variable) input_slots_[input_index.at(n.var)] = slot;
  }
  for (const auto& r : roots) root_slots_.push_back(slot_of[r.id()]);
}

// ---------------------------------------------------------------------------
// Workspace

namespace {

// Terms are evaluated left to right exactly like an unfused sum of products.
void fused_forward(const std::uint32_t* args, std::uint32_t count, const double* v, double* __restrict out,
                   std::size_t L) {
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t tag = args[3 * k];
    const double* a = v + args[3 * k + 1] * L;
    const double* b = v + args[3 * k + 2] * L;
    const bool first = k == 0;
    switch (tag) {
      case 0:
        if (first) {
          for (std::size_t l = 0; l < L; ++l) out[l] = a[l];
        } else {
          for (std::size_t l = 0; l < L; ++l) out[l] += a[l];
        }
        break;
      case 1:
        if (first) {
          for (std::size_t l = 0; l < L; ++l) out[l] = a[l] * b[l];
        } else {
          for (std::size_t l = 0; l < L; ++l) out[l] += a[l] * b[l];
        }
        break;
      case 2: {
        const double u = a[0];
        if (first) {
          for (std::size_t l = 0; l < L; ++l) out[l] = u * b[l];
        } else {
          for (std::size_t l = 0; l < L; ++l) out[l] += u * b[l];
        }
        break;
      }
      default: {
        const double w = a[0] * b[0];
        if (first) {
          for (std::size_t l = 0; l < L; ++l) out[l] = w;
        } else {
          for (std::size_t l = 0; l < L; ++l) out[l] += w;
        }
        break;
      }
    }
  }
}

// Adjoints of lane-invariant inputs are accumulated in lane 0; only their sum
// over lanes is meaningful.
void fused_backward(const std::uint32_t* args, std::uint32_t count, const double* v, double* adj,
                    const double* __restrict g, std::size_t L) {
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t tag = args[3 * k];
    const double* a = v + args[3 * k + 1] * L;
    const double* b = v + args[3 * k + 2] * L;
    double* ga = adj + args[3 * k + 1] * L;
    double* gb = adj + args[3 * k + 2] * L;
    switch (tag) {
      case 0:
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l];
        break;
      case 1:
        if (ga == gb) {
          for (std::size_t l = 0; l < L; ++l) ga[l] += 2.0 * g[l] * a[l];
        } else {
          for (std::size_t l = 0; l < L; ++l) {
            ga[l] += g[l] * b[l];
            gb[l] += g[l] * a[l];
          }
        }
        break;
      case 2: {
        const double u = a[0];
        double acc = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
          gb[l] += g[l] * u;
          acc += g[l] * b[l];
        }
        ga[0] += acc;
        break;
      }
      default: {
        double sg = 0.0;
        for (std::size_t l = 0; l < L; ++l) sg += g[l];
        if (ga == gb) {
          ga[0] += 2.0 * sg * a[0];
        } else {
          ga[0] += sg * b[0];
          gb[0] += sg * a[0];
        }
        break;
      }
    }
  }
}

}  // namespace

Workspace::Workspace(const Program& program, std::size_t lanes)
    : program_(&program),
      lanes_(lanes),
      values_(program.slot_count() * lanes, 0.0),
      adjoints_(program.slot_count() * lanes, 0.0) {
  if (lanes == 0) throw std::invalid_argument("Workspace: lanes must be positive");
  for (std::size_t s = 0; s < program.slot_count(); ++s) {
    if (program.ops_[s] == Op::Constant) {
      std::fill_n(values_.begin() + s * lanes_, lanes_, program.scalar_[s]);
    }
  }
}

void Workspace::set_uniform(std::size_t input, double value) {
  const auto slot = program_->input_slots_.at(input);
  if (slot == Program::npos) return;
  std::fill_n(values_.begin() + slot * lanes_, lanes_, value);
}

void Workspace::set_lanes(std::size_t input, std::span<const double> values) {
  if (values.size() > lanes_) throw std::invalid_argument("Workspace::set_lanes: too many values");
  const auto slot = program_->input_slots_.at(input);
  if (slot == Program::npos) return;
  if (program_->uniform_slot_[slot]) throw std::invalid_argument("Workspace::set_lanes: input is lane-invariant");
  std::copy(values.begin(), values.end(), values_.begin() + slot * lanes_);
}

void Workspace::forward() {
  const auto& p = *program_;
  const std::size_t L = lanes_;
  double* v = values_.data();
  const std::size_t n = p.ops_.size();
  for (std::size_t s = 0; s < n; ++s) {
    double* __restrict out = v + s * L;
    const std::uint32_t* args = p.operands_.data() + p.first_[s];
    switch (p.ops_[s]) {
      case Op::Constant:
      case Op::Variable:
        break;
      case Op::Sum: {
        if (p.fused_[s]) {
          fused_forward(args, p.count_[s], v, out, L);
          break;
        }
        const double* a = v + args[0] * L;
        const double* b = v + args[1] * L;
        for (std::size_t l = 0; l < L; ++l) out[l] = a[l] + b[l];
        for (std::uint32_t k = 2; k < p.count_[s]; ++k) {
          const double* c = v + args[k] * L;
          for (std::size_t l = 0; l < L; ++l) out[l] += c[l];
        }
        break;
      }
      case Op::Product: {
        const double* a = v + args[0] * L;
        const double* b = v + args[1] * L;
        for (std::size_t l = 0; l < L; ++l) out[l] = a[l] * b[l];
        break;
      }
      case Op::Power: {
        const double* a = v + args[0] * L;
        const double c = p.scalar_[s];
        if (c == 2.0) {
          for (std::size_t l = 0; l < L; ++l) out[l] = a[l] * a[l];
        } else if (c == -1.0) {
          for (std::size_t l = 0; l < L; ++l) out[l] = 1.0 / a[l];
        } else {
          for (std::size_t l = 0; l < L; ++l) out[l] = apply_power(a[l], c);
        }
        break;
      }
      case Op::Exp: {
        const double* a = v + args[0] * L;
        for (std::size_t l = 0; l < L; ++l) out[l] = std::exp(a[l]);
        break;
      }
      case Op::Log: {
        const double* a = v + args[0] * L;
        for (std::size_t l = 0; l < L; ++l) out[l] = std::log(a[l]);
        break;
      }
      case Op::Sin: {
        const double* a = v + args[0] * L;
        for (std::size_t l = 0; l < L; ++l) out[l] = std::sin(a[l]);
        break;
      }
      case Op::Cos: {
        const double* a = v + args[0] * L;
        for (std::size_t l = 0; l < L; ++l) out[l] = std::cos(a[l]);
        break;
      }
      case Op::Tanh: {
        const double* a = v + args[0] * L;
        for (std::size_t l = 0; l < L; ++l) out[l] = std::tanh(a[l]);
        break;
      }
      case Op::Softplus: {
        const double* a = v + args[0] * L;
        for (std::size_t l = 0; l < L; ++l) out[l] = softplus_value(a[l]);
        break;
      }
      case Op::Sigmoid: {
        const double* a = v + args[0] * L;
        for (std::size_t l = 0; l < L; ++l) out[l] = sigmoid_value(a[l]);
        break;
      }
    }
  }
}

double Workspace::root(std::size_t r, std::size_t lane) const {
  return values_[program_->root_slots_.at(r) * lanes_ + lane];
}

void Workspace::backward(std::size_t r, std::span<const double> seed) {
  const auto& p = *program_;
  const std::size_t L = lanes_;
  const std::uint32_t top = p.root_slots_.at(r);
  std::fill(adjoints_.begin(), adjoints_.end(), 0.0);
  for (std::size_t l = 0; l < L && l < seed.size(); ++l) adjoints_[top * L + l] = seed[l];

  const double* v = values_.data();
  double* adj = adjoints_.data();
  for (std::size_t s = top + 1; s-- > 0;) {
    const double* __restrict g = adj + s * L;
    const double* __restrict out = v + s * L;
    const std::uint32_t* args = p.operands_.data() + p.first_[s];
    switch (p.ops_[s]) {
      case Op::Constant:
      case Op::Variable:
        break;
      case Op::Sum:
        if (p.fused_[s]) {
          fused_backward(args, p.count_[s], v, adj, g, L);
          break;
        }
        for (std::uint32_t k = 0; k < p.count_[s]; ++k) {
          double* ga = adj + args[k] * L;
          for (std::size_t l = 0; l < L; ++l) ga[l] += g[l];
        }
        break;
      case Op::Product: {
        const double* a = v + args[0] * L;
        const double* b = v + args[1] * L;
        double* ga = adj + args[0] * L;
        double* gb = adj + args[1] * L;
        if (ga == gb) {
          for (std::size_t l = 0; l < L; ++l) ga[l] += 2.0 * g[l] * a[l];
        } else {
          for (std::size_t l = 0; l < L; ++l) {
            ga[l] += g[l] * b[l];
            gb[l] += g[l] * a[l];
          }
        }
        break;
      }
      case Op::Power: {
        const double* a = v + args[0] * L;
        double* ga = adj + args[0] * L;
        const double c = p.scalar_[s];
        if (c == 2.0) {
          for (std::size_t l = 0; l < L; ++l) ga[l] += 2.0 * g[l] * a[l];
        } else if (c == -1.0) {
          for (std::size_t l = 0; l < L; ++l) ga[l] -= g[l] * out[l] * out[l];
        } else {
          for (std::size_t l = 0; l < L; ++l) ga[l] += g[l] * power_slope(a[l], c);
        }
        break;
      }
      case Op::Exp: {
        double* ga = adj + args[0] * L;
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l] * out[l];
        break;
      }
      case Op::Log: {
        const double* a = v + args[0] * L;
        double* ga = adj + args[0] * L;
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l] / a[l];
        break;
      }
      case Op::Sin: {
        const double* a = v + args[0] * L;
        double* ga = adj + args[0] * L;
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l] * std::cos(a[l]);
        break;
      }
      case Op::Cos: {
        const double* a = v + args[0] * L;
        double* ga = adj + args[0] * L;
        for (std::size_t l = 0; l < L; ++l) ga[l] -= g[l] * std::sin(a[l]);
        break;
      }
      case Op::Tanh: {
        double* ga = adj + args[0] * L;
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l] * (1.0 - out[l] * out[l]);
        break;
      }
      case Op::Softplus: {
        const double* a = v + args[0] * L;
        double* ga = adj + args[0] * L;
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l] * sigmoid_value(a[l]);
        break;
      }
      case Op::Sigmoid: {
        double* ga = adj + args[0] * L;
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l] * out[l] * (1.0 - out[l]);
        break;
      }
    }
  }
}

double Workspace::input_adjoint_sum(std::size_t input) const {
  const auto slot = program_->input_slots_.at(input);
  if (slot == Program::npos) return 0.0;
  double acc = 0.0;
  for (std::size_t l = 0; l < lanes_; ++l) acc += adjoints_[slot * lanes_ + l];
  return acc;
}

double Workspace::input_adjoint(std::size_t input, std::size_t lane) const {
  const auto slot = program_->input_slots_.at(input);
  if (slot == Program::npos) return 0.0;
  return adjoints_[slot * lanes_ + lane];
}

}  // namespace pinn::ad
