#include "pinn/problems.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pinn {

using ad::Expr;

FieldContext::FieldContext(std::span<const Expr> fields, std::span<const ad::VarId> inputs,
                           std::span<const ad::VarId> params)
    : graph_(fields.empty() ? nullptr : &fields.front().graph()), fields_(fields), inputs_(inputs), params_(params) {
  if (!graph_) throw std::invalid_argument("FieldContext: no fields");
}

Expr FieldContext::laplacian(Expr e, std::size_t spatial_dims) const {
  std::vector<Expr> terms;
  for (std::size_t a = 0; a < spatial_dims; ++a) terms.push_back(d2(e, a));
  return graph_->sum(terms);
}

std::vector<std::string> Problem::input_names() const {
  std::vector<std::string> out;
  for (const auto& a : domain.axes()) out.push_back(a.name);
  return out;
}

std::vector<std::string> Problem::parameter_names() const {
  std::vector<std::string> out;
  for (const auto& a : parameters.axes()) out.push_back(a.name);
  return out;
}

std::size_t Problem::field_index(const std::string& field) const {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i] == field) return i;
  }
  throw std::invalid_argument("problem '" + name + "' has no field '" + field + "'");
}

FacetMask Problem::boundary_facets() const {
  FacetMask m;
  for (const auto& bc : boundary_conditions) m = m | bc.facets;
  return m;
}

namespace {

constexpr double kPi = std::numbers::pi;

Box square(double low, double high) { return Box({{"x0", low, high}, {"x1", low, high}}); }

BoundaryCondition zero_dirichlet(std::string name, FacetMask facets, std::size_t field) {
  return {std::move(name), facets, BoundaryCondition::Kind::Dirichlet, {field},
          [field](const FieldContext& c) { return std::vector<Expr>{c.field(field)}; }};
}

Problem make_poisson1() {
  Problem p;
  p.name = "poisson1";
  p.domain = square(0.0, 1.0);
  p.spatial_dims = 2;
  p.fields = {"w"};
  p.equations = {"laplace(w) - f"};
  // Sign as stated for this model: laplace(w) = f.
  p.residuals = [](const FieldContext& c) {
    Expr f = ad::sin(kPi * c.input(0)) * ad::sin(kPi * c.input(1));
    return std::vector<Expr>{c.laplacian(c.field(0), 2) - f};
  };
  p.boundary_conditions = {zero_dirichlet("dirichlet", FacetMask::all(p.domain), 0)};
  p.exact_expr = [](ad::Graph&, std::span<const Expr> x, std::span<const Expr>) {
    return std::vector<Expr>{-(ad::sin(kPi * x[0]) * ad::sin(kPi * x[1])) / (2.0 * kPi * kPi)};
  };
  p.exact = [](std::span<const double> x, std::span<const double>) {
    return std::vector<double>{-std::sin(kPi * x[0]) * std::sin(kPi * x[1]) / (2.0 * kPi * kPi)};
  };
  p.defaults = {{10, 10}, Activation::Softplus, 0.003, 1000, 100, 40, 1, SamplerKind::Grid, SamplerKind::Grid, "",
                "flat"};
  return p;
}

Problem make_poisson2() {
  Problem p = make_poisson1();
  p.name = "poisson2";
  p.residuals = [](const FieldContext& c) {
    Expr x0 = c.input(0), x1 = c.input(1);
    Expr f = -2.0 * (x1 * (1.0 - x1) + x0 * (1.0 - x0));
    return std::vector<Expr>{c.laplacian(c.field(0), 2) - f};
  };
  p.exact_expr = [](ad::Graph&, std::span<const Expr> x, std::span<const Expr>) {
    return std::vector<Expr>{x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])};
  };
  p.exact = [](std::span<const double> x, std::span<const double>) {
    return std::vector<double>{x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])};
  };
  p.defaults.epochs = 10000;
  return p;
}

Problem make_burgers() {
  Problem p;
  p.name = "burgers";
  p.domain = Box({{"x0", -1.0, 1.0}, {"t", 0.0, 1.0, AxisKind::Temporal}});
  p.spatial_dims = 1;
  p.fields = {"w"};
  p.equations = {"w_t + w w_x - (0.01/pi) w_xx"};
  p.residuals = [](const FieldContext& c) {
    Expr w = c.field(0);
    return std::vector<Expr>{c.d(w, 1) + w * c.d(w, 0) - (0.01 / kPi) * c.d2(w, 0)};
  };
  p.boundary_conditions = {
      zero_dirichlet("walls", FacetMask::of({{0, 0}, {0, 1}}), 0),
      {"initial", FacetMask::of({{1, 0}}), BoundaryCondition::Kind::Dirichlet, {0},
       [](const FieldContext& c) { return std::vector<Expr>{c.field(0) + ad::sin(kPi * c.input(0))}; }},
  };
  p.defaults = {{20, 10, 5},
                Activation::Tanh,
                0.006,
                10000,
                8000,
                150,
                1,
                SamplerKind::LatinHypercube,
                SamplerKind::UniformRandom,
                "burgers_ic",
                "flat"};
  return p;
}

Problem make_poisson_param() {
  Problem p;
  p.name = "poisson_param";
  p.domain = square(-1.0, 1.0);
  p.parameters = Box({{"mu1", -1.0, 1.0, AxisKind::Parametric}, {"mu2", -1.0, 1.0, AxisKind::Parametric}});
  p.fields = {"w"};
  p.equations = {"-laplace(w) - f(x, mu)"};
  // The forcing reads mu1 in both exponent terms, exactly as stated.
  p.residuals = [](const FieldContext& c) {
    Expr a = c.input(0) - c.param(0);
    Expr b = c.input(1) - c.param(0);
    Expr f = ad::exp(-2.0 * (a * a + b * b));
    return std::vector<Expr>{-c.laplacian(c.field(0), 2) - f};
  };
  p.boundary_conditions = {zero_dirichlet("dirichlet", FacetMask::all(p.domain), 0)};
  p.defaults = {{20, 20, 20}, Activation::Softplus, 0.03, 1000, 400, 80, 40, SamplerKind::Grid, SamplerKind::Grid,
                "parametric_gaussian", "flat"};
  return p;
}

Problem make_ocp_poisson() {
  Problem p;
  p.name = "ocp_poisson";
  p.domain = square(-1.0, 1.0);
  p.parameters = Box({{"mu1", 0.5, 3.0, AxisKind::Parametric}, {"mu2", 0.01, 1.0, AxisKind::Parametric}});
  p.fields = {"y", "u", "z"};
  p.equations = {"y - laplace(z) - mu1", "mu2 u - z", "-laplace(y) - u"};
  p.residuals = [](const FieldContext& c) {
    Expr y = c.field(0), u = c.field(1), z = c.field(2);
    return std::vector<Expr>{
        y - c.laplacian(z, 2) - c.param(0),
        c.param(1) * u - z,
        -c.laplacian(y, 2) - u,
    };
  };
  p.boundary_conditions = {
      zero_dirichlet("state", FacetMask::all(p.domain), 0),
      zero_dirichlet("adjoint", FacetMask::all(p.domain), 2),
  };
  p.relations = {{"z", {"u", "mu2"}, "mu2*u", 1}};
  p.cost_density = [](std::span<const double> f, std::span<const double>, std::span<const double> mu) {
    return 0.5 * (f[0] - mu[0]) * (f[0] - mu[0]) + 0.5 * mu[1] * f[1] * f[1];
  };
  p.defaults = {{40, 40, 20}, Activation::Softplus, 0.002, 10000, 900, 200, 50, SamplerKind::Grid,
                SamplerKind::Grid, "ocp_bubble", "pi_arch"};
  return p;
}

// Fields: v1 v2 p z1 z2 r u1 u2. Axis x0 is the horizontal coordinate, x1 the
// vertical one (the desired state and inflow profile is v1 = x1).
Problem make_ocp_stokes() {
  using ocp_constants::stokes_alpha;
  using ocp_constants::stokes_viscosity;
  Problem p;
  p.name = "ocp_stokes";
  p.domain = Box({{"x0", 0.0, 1.0}, {"x1", 0.0, 2.0}});
  p.parameters = Box({{"mu1", 0.5, 1.5, AxisKind::Parametric}});
  p.fields = {"v1", "v2", "p", "z1", "z2", "r", "u1", "u2"};
  p.equations = {"adjoint momentum x", "adjoint momentum y", "adjoint divergence", "optimality x",
                 "optimality y",       "state momentum x",   "state momentum y",   "state divergence"};
  p.residuals = [](const FieldContext& c) {
    const double nu = stokes_viscosity;
    Expr v1 = c.field(0), v2 = c.field(1), pr = c.field(2);
    Expr z1 = c.field(3), z2 = c.field(4), r = c.field(5);
    Expr u1 = c.field(6), u2 = c.field(7);
    Expr x1 = c.input(1);
    Expr body = c.param(0);  // forcing f = (mu1, 0)
    return std::vector<Expr>{
        -nu * c.laplacian(z1, 2) + c.d(r, 0) - (x1 - v1),
        -nu * c.laplacian(z2, 2) + c.d(r, 1),
        c.d(z1, 0) + c.d(z2, 1),
        stokes_alpha * u1 - z1,
        stokes_alpha * u2 - z2,
        -nu * c.laplacian(v1, 2) + c.d(pr, 0) - body - u1,
        -nu * c.laplacian(v2, 2) + c.d(pr, 1) - u2,
        c.d(v1, 0) + c.d(v2, 1),
    };
  };
  // Inflow x0 = 0 plus the top and bottom walls carry the shear profile.
  const auto dirichlet = FacetMask::of({{0, 0}, {1, 0}, {1, 1}});
  const auto outflow = FacetMask::of({{0, 1}});
  using Kind = BoundaryCondition::Kind;
  p.boundary_conditions = {
      {"state_dirichlet", dirichlet, Kind::Dirichlet, {0, 1},
       [](const FieldContext& c) { return std::vector<Expr>{c.field(0) - c.input(1), c.field(1)}; }},
      {"adjoint_dirichlet", dirichlet, Kind::Dirichlet, {3, 4},
       [](const FieldContext& c) { return std::vector<Expr>{c.field(3), c.field(4)}; }},
      {"outflow_traction", outflow, Kind::Neumann, {0, 2, 3, 5},
       [](const FieldContext& c) {
         const double nu = stokes_viscosity;
         return std::vector<Expr>{-c.field(2) + nu * c.d(c.field(0), 0), -c.field(5) + nu * c.d(c.field(3), 0)};
       }},
      {"outflow_tangential", outflow, Kind::Dirichlet, {1, 4},
       [](const FieldContext& c) { return std::vector<Expr>{c.field(1), c.field(4)}; }},
  };
  p.relations = {{"z1", {"u1"}, "0.008*u1", 3}, {"z2", {"u2"}, "0.008*u2", 4}};
  p.cost_density = [](std::span<const double> f, std::span<const double> x, std::span<const double>) {
    return 0.5 * (f[0] - x[1]) * (f[0] - x[1]) + 0.5 * stokes_alpha * (f[6] * f[6] + f[7] * f[7]);
  };
  p.defaults = {{40, 40, 40, 40},
                Activation::Softplus,
                0.003,
                10000,
                400,
                1800,
                10,
                SamplerKind::LatinHypercube,
                SamplerKind::UniformRandom,
                "",
                "pi_arch",
                SamplerKind::LatinHypercube};
  return p;
}

}  // namespace

const std::vector<Problem>& catalog() {
  static const std::vector<Problem> problems = {make_poisson1(),      make_poisson2(),      make_burgers(),
                                                make_poisson_param(), make_ocp_poisson(), make_ocp_stokes()};
  return problems;
}

const Problem& find_problem(const std::string& name) {
  for (const auto& p : catalog()) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("unknown problem '" + name + "'");
}

std::vector<Expr> residual_exprs(const Problem& problem, std::span<const Expr> outputs,
                                 std::span<const ad::VarId> inputs, std::span<const ad::VarId> params) {
  if (outputs.size() != problem.fields.size()) {
    throw std::invalid_argument(problem.name + ": expected " + std::to_string(problem.fields.size()) +
                                " outputs, got " + std::to_string(outputs.size()));
  }
  if (inputs.size() != problem.domain.dim()) {
    throw std::invalid_argument(problem.name + ": expected " + std::to_string(problem.domain.dim()) +
                                " inputs, got " + std::to_string(inputs.size()));
  }
  if (params.size() != problem.parameters.dim()) {
    throw std::invalid_argument(problem.name + ": expected " + std::to_string(problem.parameters.dim()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  return problem.residuals(FieldContext(outputs, inputs, params));
}

std::optional<std::vector<double>> exact_solution(const Problem& problem, std::span<const double> x,
                                                  std::span<const double> mu) {
  if (!problem.exact) return std::nullopt;
  return problem.exact(x, mu);
}

double cost_functional(
    const Problem& problem,
    const std::function<std::vector<double>(std::span<const double>, std::span<const double>)>& fields,
    std::span<const double> mu, std::size_t n) {
  if (!problem.cost_density) throw std::invalid_argument(problem.name + " has no cost functional");
  const std::size_t counts[] = {n, n};
  const auto pts = interior_grid(problem.domain, counts);
  const double cell = problem.domain.length(0) * problem.domain.length(1) / static_cast<double>(n * n);
  double total = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto x = pts.point(i);
    total += problem.cost_density(fields(x, mu), x, mu);
  }
  return total * cell;
}

}  // namespace pinn
