#pragma once
/**
 * @file problems.hpp
 * @brief Catalog of PDE and optimal-control test problems.
 *
 * Each Problem describes its residual operators (one per unknown field), its
 * boundary conditions, parameter box, optional closed-form solution and the
 * default training setup for its experiment.
 */

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pinn/autodiff.hpp"
#include "pinn/network.hpp"
#include "pinn/sampling.hpp"

namespace pinn {

/// Symbolic view of one model evaluation: fields as functions of the inputs.
class FieldContext {
 public:
  FieldContext(std::span<const ad::Expr> fields, std::span<const ad::VarId> inputs, std::span<const ad::VarId> params);

  ad::Graph& graph() const { return *graph_; }
  ad::Expr field(std::size_t i) const { return fields_[i]; }
  std::size_t field_count() const { return fields_.size(); }
  ad::Expr input(std::size_t axis) const { return graph_->variable(inputs_[axis]); }
  ad::Expr param(std::size_t i) const { return graph_->variable(params_[i]); }

  ad::Expr d(ad::Expr e, std::size_t axis) const { return ad::derive(e, inputs_[axis]); }
  ad::Expr d2(ad::Expr e, std::size_t axis) const { return ad::derive(e, inputs_[axis], 2); }
  /// Sum of second derivatives over the spatial axes [0, spatial_dims).
  ad::Expr laplacian(ad::Expr e, std::size_t spatial_dims) const;

 private:
  ad::Graph* graph_;
  std::span<const ad::Expr> fields_;
  std::span<const ad::VarId> inputs_;
  std::span<const ad::VarId> params_;
};

struct BoundaryCondition {
  enum class Kind { Dirichlet, Neumann };

  std::string name;
  FacetMask facets;
  Kind kind = Kind::Dirichlet;
  /// Fields the mismatch expressions read.
  std::vector<std::size_t> targets;
  /// Mismatch components; the condition holds when all are zero.
  std::function<std::vector<ad::Expr>(const FieldContext&)> mismatch;
};

/// A closed-form relation between fields, e.g. the optimality condition z = mu2 u.
struct OptimalityRelation {
  std::string output;               // field it determines
  std::vector<std::string> inputs;  // fields and parameter names it reads
  std::string expression;           // over `inputs`
  std::size_t equation;             // residual index that it makes redundant
};

enum class SamplerKind { Grid, LatinHypercube, UniformRandom };

/// Experiment defaults as stated for each problem's reference experiment.
struct ProblemDefaults {
  std::vector<std::size_t> hidden;
  Activation activation = Activation::Softplus;
  double learning_rate = 1e-3;
  std::size_t epochs = 1000;
  std::size_t n_interior = 100;
  std::size_t n_boundary = 40;
  std::size_t n_parameter = 1;
  SamplerKind interior_sampler = SamplerKind::Grid;
  SamplerKind boundary_sampler = SamplerKind::Grid;
  std::string feature;  // preset name, empty for none
  std::string architecture = "flat";
  SamplerKind parameter_sampler = SamplerKind::Grid;
};

struct Problem {
  std::string name;
  Box domain;      // spatial axes, then the time axis if any
  Box parameters;  // empty for non-parametric problems
  std::size_t spatial_dims = 2;
  std::vector<std::string> fields;
  std::vector<std::string> equations;
  std::function<std::vector<ad::Expr>(const FieldContext&)> residuals;
  std::vector<BoundaryCondition> boundary_conditions;
  /// Closed form as expressions of (inputs, params); empty when unknown.
  std::function<std::vector<ad::Expr>(ad::Graph&, std::span<const ad::Expr>, std::span<const ad::Expr>)>
      exact_expr;
  std::function<std::vector<double>(std::span<const double>, std::span<const double>)> exact;
  std::vector<OptimalityRelation> relations;
  /// Integrand of the control cost functional (OCPs only).
  std::function<double(std::span<const double> fields, std::span<const double> x, std::span<const double> mu)>
      cost_density;
  ProblemDefaults defaults;

  std::vector<std::string> input_names() const;     // domain axes
  std::vector<std::string> parameter_names() const;  // parameter axes
  std::size_t field_index(const std::string& field) const;
  FacetMask boundary_facets() const;
};

const std::vector<Problem>& catalog();
const Problem& find_problem(const std::string& name);

/// r_j for every equation; errors on arity mismatch.
std::vector<ad::Expr> residual_exprs(const Problem& problem, std::span<const ad::Expr> outputs,
                                     std::span<const ad::VarId> inputs, std::span<const ad::VarId> params);

std::optional<std::vector<double>> exact_solution(const Problem& problem, std::span<const double> x,
                                                  std::span<const double> mu);

/// Midpoint-rule integral of the cost density over an n x n cell grid.
double cost_functional(
    const Problem& problem,
    const std::function<std::vector<double>(std::span<const double> x, std::span<const double> mu)>& fields,
    std::span<const double> mu, std::size_t n);

/// Constants of the control problems.
namespace ocp_constants {
inline constexpr double stokes_viscosity = 0.1;
inline constexpr double stokes_alpha = 0.008;
}  // namespace ocp_constants

}  // namespace pinn
