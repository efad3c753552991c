#include "pinn/expression.hpp"

#include <cctype>
#include <cstdlib>
#include <numbers>

namespace pinn {

struct ParsedExpression::Node {
  enum class Kind { Number, Name, Add, Sub, Mul, Div, Neg, Pow, Call } kind;
  double value = 0.0;
  std::string name;  // Name or Call
  std::vector<std::shared_ptr<const Node>> children;
};

namespace {

using NodePtr = std::shared_ptr<const ParsedExpression::Node>;
using Kind = ParsedExpression::Node::Kind;

const std::set<std::string> kFunctions = {"sin", "cos", "exp", "log", "tanh"};

NodePtr make(Kind kind, std::vector<NodePtr> children = {}, double value = 0.0, std::string name = {}) {
  auto n = std::make_shared<ParsedExpression::Node>();
  n->kind = kind;
  n->children = std::move(children);
  n->value = value;
  n->name = std::move(name);
  return n;
}

class Parser {
 public:
  Parser(const std::string& text, const std::set<std::string>& allowed, std::set<std::string>& used)
      : s_(text), allowed_(allowed), used_(used) {}

  NodePtr run() {
    auto e = expr();
    skip();
    if (pos_ != s_.size()) throw ParseError("unexpected '" + std::string(1, s_[pos_]) + "'", pos_);
    return e;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) throw ParseError(std::string("expected '") + c + "'", pos_);
  }

  NodePtr expr() {
    auto lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = make(Kind::Add, {lhs, term()});
      } else if (accept('-')) {
        lhs = make(Kind::Sub, {lhs, term()});
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    auto lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = make(Kind::Mul, {lhs, unary()});
      } else if (accept('/')) {
        lhs = make(Kind::Div, {lhs, unary()});
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Kind::Neg, {unary()});
    return power();
  }

  NodePtr power() {
    auto base = primary();
    if (accept('^')) {
      const auto at = pos_;
      auto exponent = unary();
      const auto folded = constant_value(*exponent);
      if (!folded) throw ParseError("exponent must be a constant", at);
      return make(Kind::Pow, {base}, *folded);
    }
    return base;
  }

  static std::optional<double> constant_value(const ParsedExpression::Node& n) {
    if (n.kind == Kind::Number) return n.value;
    if (n.kind == Kind::Neg) {
      if (auto v = constant_value(*n.children[0])) return -*v;
    }
    return std::nullopt;
  }

  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) throw ParseError("unexpected end of expression", pos_);
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      auto e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) throw ParseError("bad number", pos_);
      pos_ += static_cast<std::size_t>(end - begin);
      return make(Kind::Number, {}, v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const auto start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      std::string name = s_.substr(start, pos_ - start);
      if (kFunctions.contains(name)) {
        expect('(');
        auto arg = expr();
        expect(')');
        return make(Kind::Call, {arg}, 0.0, name);
      }
      if (name == "pi") return make(Kind::Number, {}, std::numbers::pi);
      if (!allowed_.contains(name)) throw ParseError("unknown variable '" + name + "'", start);
      used_.insert(name);
      return make(Kind::Name, {}, 0.0, name);
    }
    throw ParseError("unexpected '" + std::string(1, c) + "'", pos_);
  }

  const std::string& s_;
  const std::set<std::string>& allowed_;
  std::set<std::string>& used_;
  std::size_t pos_ = 0;
};

ad::Expr build(const ParsedExpression::Node& n, ad::Graph& g,
               const std::function<ad::Expr(const std::string&)>& lookup) {
  auto child = [&](std::size_t i) { return build(*n.children[i], g, lookup); };
  switch (n.kind) {
    case Kind::Number: return g.constant(n.value);
    case Kind::Name: return lookup(n.name);
    case Kind::Add: return child(0) + child(1);
    case Kind::Sub: return child(0) - child(1);
    case Kind::Mul: return child(0) * child(1);
    case Kind::Div: return child(0) / child(1);
    case Kind::Neg: return -child(0);
    case Kind::Pow: return ad::pow(child(0), n.value);
    case Kind::Call: {
      auto a = child(0);
      if (n.name == "sin") return ad::sin(a);
      if (n.name == "cos") return ad::cos(a);
      if (n.name == "exp") return ad::exp(a);
      if (n.name == "log") return ad::log(a);
      return ad::tanh(a);
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace

ParsedExpression ParsedExpression::parse(const std::string& text, const std::set<std::string>& allowed_names) {
  ParsedExpression out;
  out.text_ = text;
  Parser p(text, allowed_names, out.names_);
  out.root_ = p.run();
  return out;
}

ad::Expr ParsedExpression::instantiate(ad::Graph& graph,
                                       const std::function<ad::Expr(const std::string&)>& lookup) const {
  return build(*root_, graph, lookup);
}

}  // namespace pinn
