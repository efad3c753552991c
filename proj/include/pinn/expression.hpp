#pragma once
/**
 * @file expression.hpp
 * @brief Parser for closed-form feature and config expressions.
 *
 * Grammar (usual precedence, '^' right-associative with a constant exponent):
 *   expr    := term (('+' | '-') term)*
 *   term    := unary (('*' | '/') unary)*
 *   unary   := '-' unary | power
 *   power   := primary ('^' unary)?
 *   primary := number | name | func '(' expr ')' | '(' expr ')'
 * Functions: sin cos exp log tanh. The name `pi` is the constant.
 */

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "pinn/autodiff.hpp"

namespace pinn {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : std::runtime_error(message + " at offset " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class ParsedExpression {
 public:
  /// Throws ParseError on bad syntax or on a name outside `allowed_names`.
  static ParsedExpression parse(const std::string& text, const std::set<std::string>& allowed_names);

  const std::string& text() const { return text_; }
  /// Names referenced by the expression (excluding pi and function names).
  const std::set<std::string>& names() const { return names_; }

  /// Builds the graph; `lookup` maps each referenced name to an Expr.
  ad::Expr instantiate(ad::Graph& graph, const std::function<ad::Expr(const std::string&)>& lookup) const;

  struct Node;

 private:
  std::string text_;
  std::set<std::string> names_;
  std::shared_ptr<const Node> root_;
};

}  // namespace pinn
