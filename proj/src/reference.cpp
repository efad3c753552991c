#include "pinn/reference.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "pinn/problems.hpp"

namespace pinn {

double GridSolution::coord(std::size_t axis, std::size_t k) const {
  if (k + 1 == n) return box.axis(axis).high;
  return box.axis(axis).low + h(axis) * static_cast<double>(k);
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

void check_box(const Box& box, std::size_t n) {
  if (box.dim() != 2) throw std::invalid_argument("finite-difference reference needs a 2D box");
  if (n < 9) throw std::invalid_argument("finite-difference reference needs n >= 9 nodes per axis");
}

// Negative 5-point Laplacian on the interior nodes, zero Dirichlet data.
SpMat negative_laplacian(const Box& box, std::size_t n) {
  const std::size_t m = n - 2;
  const double hx = box.length(0) / static_cast<double>(n - 1);
  const double hy = box.length(1) / static_cast<double>(n - 1);
  const double cx = 1.0 / (hx * hx), cy = 1.0 / (hy * hy);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(5 * m * m);
  auto idx = [m](std::size_t i, std::size_t j) { return static_cast<int>(i * m + j); };
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const int k = idx(i, j);
      t.emplace_back(k, k, 2.0 * cx + 2.0 * cy);
      if (i > 0) t.emplace_back(k, idx(i - 1, j), -cx);
      if (i + 1 < m) t.emplace_back(k, idx(i + 1, j), -cx);
      if (j > 0) t.emplace_back(k, idx(i, j - 1), -cy);
      if (j + 1 < m) t.emplace_back(k, idx(i, j + 1), -cy);
    }
  }
  SpMat a(static_cast<int>(m * m), static_cast<int>(m * m));
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

double inf_norm(const SpMat& a) {
  Vec rows = Vec::Zero(a.rows());
  for (int k = 0; k < a.outerSize(); ++k) {
    for (SpMat::InnerIterator it(a, k); it; ++it) rows[it.row()] += std::abs(it.value());
  }
  return rows.size() ? rows.maxCoeff() : 0.0;
}

Vec solve_spd(const SpMat& a, const Vec& b) {
  Eigen::SimplicialLDLT<SpMat> solver(a);
  if (solver.info() != Eigen::Success) throw std::runtime_error("finite-difference solve: factorization failed");
  Vec x = solver.solve(b);
  if (solver.info() != Eigen::Success) throw std::runtime_error("finite-difference solve: back-substitution failed");
  const double residual = (a * x - b).lpNorm<Eigen::Infinity>();
  const double scale = inf_norm(a) * x.lpNorm<Eigen::Infinity>() + b.lpNorm<Eigen::Infinity>();
  if (!(residual <= 1e-10 * std::max(scale, 1e-300))) {
    throw std::runtime_error("finite-difference solve: residual " + std::to_string(residual) + " too large");
  }
  return x;
}

// Embeds interior values into the full node array (boundary nodes zero).
std::vector<double> embed(const Vec& interior, std::size_t n) {
  const std::size_t m = n - 2;
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[(i + 1) * n + (j + 1)] = interior[static_cast<int>(i * m + j)];
  }
  return out;
}

}  // namespace

GridSolution solve_poisson_fd(const Box& box, const std::function<double(double, double)>& forcing, LaplaceSign sign,
                              std::size_t n) {
  check_box(box, n);
  GridSolution sol{box, n, {"w"}, {}};
  const std::size_t m = n - 2;
  Vec b(static_cast<int>(m * m));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double f = forcing(sol.coord(0, i + 1), sol.coord(1, j + 1));
      b[static_cast<int>(i * m + j)] = sign == LaplaceSign::Negative ? f : -f;
    }
  }
  sol.values.push_back(embed(solve_spd(negative_laplacian(box, n), b), n));
  return sol;
}

GridSolution solve_ocp_poisson_fd(std::span<const double> mu, std::size_t n) {
  if (mu.size() != 2) throw std::invalid_argument("solve_ocp_poisson_fd: expects (mu1, mu2)");
  if (!(mu[1] > 0.0)) throw std::invalid_argument("solve_ocp_poisson_fd: mu2 must be positive");
  const Box box({{"x0", -1.0, 1.0}, {"x1", -1.0, 1.0}});
  check_box(box, n);
  const std::size_t m = n - 2;
  const SpMat a = negative_laplacian(box, n);
  // z = mu2 A y eliminates the adjoint: (I + mu2 A^2) y = mu1.
  SpMat identity(a.rows(), a.cols());
  identity.setIdentity();
  const SpMat reduced = identity + mu[1] * SpMat(a * a);
  const Vec rhs = Vec::Constant(static_cast<int>(m * m), mu[0]);
  const Vec y = solve_spd(reduced, rhs);
  const Vec u = a * y;
  const Vec z = mu[1] * u;

  const double r1 = (y + a * z - rhs).lpNorm<Eigen::Infinity>();
  const double scale = inf_norm(reduced) * y.lpNorm<Eigen::Infinity>() + std::abs(mu[0]);
  if (!(r1 <= 1e-10 * scale)) throw std::runtime_error("solve_ocp_poisson_fd: coupled residual too large");

  GridSolution sol{box, n, {"y", "u", "z"}, {}};
  sol.values = {embed(y, n), embed(u, n), embed(z, n)};
  return sol;
}

bool has_reference(const Problem& problem) {
  return problem.name == "poisson1" || problem.name == "poisson2" || problem.name == "poisson_param" ||
         problem.name == "ocp_poisson";
}

GridSolution solve_reference(const Problem& problem, std::span<const double> mu, std::size_t n) {
  constexpr double pi = 3.14159265358979323846;
  if (problem.name == "poisson1") {
    return solve_poisson_fd(
        problem.domain, [](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); }, LaplaceSign::Positive,
        n);
  }
  if (problem.name == "poisson2") {
    return solve_poisson_fd(
        problem.domain, [](double x, double y) { return -2.0 * (y * (1.0 - y) + x * (1.0 - x)); },
        LaplaceSign::Positive, n);
  }
  if (problem.name == "poisson_param") {
    if (mu.size() != 2) throw std::invalid_argument("poisson_param reference expects (mu1, mu2)");
    const double m1 = mu[0];
    return solve_poisson_fd(
        problem.domain,
        [m1](double x, double y) { return std::exp(-2.0 * ((x - m1) * (x - m1) + (y - m1) * (y - m1))); },
        LaplaceSign::Negative, n);
  }
  if (problem.name == "ocp_poisson") return solve_ocp_poisson_fd(mu, n);
  throw std::invalid_argument("no finite-difference reference for '" + problem.name + "'");
}

std::vector<double> interpolate(const GridSolution& sol, std::span<const double> x) {
  if (x.size() != 2) throw std::invalid_argument("interpolate: expects a 2D point");
  if (!sol.box.contains(x, 1e-12)) throw std::out_of_range("interpolate: point outside the grid box");
  std::size_t cell[2];
  double t[2];
  for (std::size_t a = 0; a < 2; ++a) {
    const double s = (x[a] - sol.box.axis(a).low) / sol.h(a);
    const double k = std::clamp(std::floor(s), 0.0, static_cast<double>(sol.n - 2));
    cell[a] = static_cast<std::size_t>(k);
    t[a] = std::clamp(s - k, 0.0, 1.0);
  }
  std::vector<double> out;
  for (std::size_t f = 0; f < sol.fields.size(); ++f) {
    const double v00 = sol.at(f, cell[0], cell[1]);
    const double v10 = sol.at(f, cell[0] + 1, cell[1]);
    const double v01 = sol.at(f, cell[0], cell[1] + 1);
    const double v11 = sol.at(f, cell[0] + 1, cell[1] + 1);
    const double lower = std::lerp(v00, v10, t[0]);
    const double upper = std::lerp(v01, v11, t[0]);
    out.push_back(std::lerp(lower, upper, t[1]));
  }
  return out;
}

void write_csv(std::ostream& os, const GridSolution& sol) {
  os << sol.box.axis(0).name << ',' << sol.box.axis(1).name;
  for (const auto& f : sol.fields) os << ',' << f;
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < sol.n; ++i) {
    for (std::size_t j = 0; j < sol.n; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", sol.coord(0, i));
      os << buf;
      std::snprintf(buf, sizeof buf, ",%.17g", sol.coord(1, j));
      os << buf;
      for (std::size_t f = 0; f < sol.fields.size(); ++f) {
        std::snprintf(buf, sizeof buf, ",%.17g", sol.at(f, i, j));
        os << buf;
      }
      os << '\n';
    }
  }
}

}  // namespace pinn
