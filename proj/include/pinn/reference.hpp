#pragma once
/**
 * @file reference.hpp
 * @brief Finite-difference reference solutions on uniform node grids:
 * 5-point Poisson solves and the coupled Poisson optimal-control system.
 */

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pinn/sampling.hpp"

namespace pinn {

struct Problem;

/// Node values on an n x n grid including the boundary nodes.
struct GridSolution {
  Box box;
  std::size_t n = 0;
  std::vector<std::string> fields;
  std::vector<std::vector<double>> values;  // per field, index i * n + j (i along axis 0)

  double h(std::size_t axis) const { return box.length(axis) / static_cast<double>(n - 1); }
  double coord(std::size_t axis, std::size_t k) const;
  double at(std::size_t field, std::size_t i, std::size_t j) const { return values[field][i * n + j]; }
};

enum class LaplaceSign {
  Positive,  // laplace(w) = f
  Negative,  // -laplace(w) = f
};

/**
 * Zero-Dirichlet Poisson problem on a 2D box with the 5-point Laplacian.
 * Requires n >= 9. Throws std::runtime_error if the factorization fails or the
 * algebraic residual exceeds 1e-10 relative to the right-hand side.
 */
GridSolution solve_poisson_fd(const Box& box, const std::function<double(double, double)>& forcing, LaplaceSign sign,
                              std::size_t n);

/**
 * Optimality system {y - laplace(z) = mu1, mu2 u - z = 0, -laplace(y) - u = 0}
 * on [-1,1]^2 with y = z = 0 on the boundary. Fields y, u, z.
 */
GridSolution solve_ocp_poisson_fd(std::span<const double> mu, std::size_t n);

/// Reference for a catalog problem at one parameter value; throws when the
/// problem has no finite-difference reference.
GridSolution solve_reference(const Problem& problem, std::span<const double> mu, std::size_t n);
bool has_reference(const Problem& problem);

/// Bilinear interpolation of every field; throws std::out_of_range outside the box.
std::vector<double> interpolate(const GridSolution& sol, std::span<const double> x);

/// Header x0,x1,<fields>, one row per node.
void write_csv(std::ostream& os, const GridSolution& sol);

}  // namespace pinn
