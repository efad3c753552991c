#include <cmath>
#include <sstream>

#include "gtest/gtest.h"
#include "pinn/problems.hpp"
#include "pinn/reference.hpp"
#include "pinn/rng.hpp"

using namespace pinn;

namespace {

double max_node_error(const GridSolution& sol, const Problem& p) {
  double worst = 0.0;
  for (std::size_t i = 0; i < sol.n; ++i) {
    for (std::size_t j = 0; j < sol.n; ++j) {
      const double x[] = {sol.coord(0, i), sol.coord(1, j)};
      worst = std::max(worst, std::abs(sol.at(0, i, j) - (*exact_solution(p, x, {}))[0]));
    }
  }
  return worst;
}

// Second differences on the grid, used to evaluate the OCP equations at nodes.
double neg_laplace(const GridSolution& s, std::size_t f, std::size_t i, std::size_t j) {
  const double hx = s.h(0), hy = s.h(1);
  return -(s.at(f, i + 1, j) - 2 * s.at(f, i, j) + s.at(f, i - 1, j)) / (hx * hx) -
         (s.at(f, i, j + 1) - 2 * s.at(f, i, j) + s.at(f, i, j - 1)) / (hy * hy);
}

}  // namespace

TEST(PoissonFd, SecondOrderAgainstSineClosedForm) {
  const auto& p = find_problem("poisson1");
  const double coarse = max_node_error(solve_reference(p, {}, 65), p);
  const double fine = max_node_error(solve_reference(p, {}, 129), p);
  EXPECT_LT(coarse, 1e-4);
  EXPECT_GE(coarse / fine, 3.5);
}

TEST(PoissonFd, PolynomialClosedFormIsReproduced) {
  // The 5-point stencil is exact on products of quadratics, so the error is
  // round-off at every resolution.
  const auto& p = find_problem("poisson2");
  const double coarse = max_node_error(solve_reference(p, {}, 65), p);
  const double fine = max_node_error(solve_reference(p, {}, 129), p);
  EXPECT_LT(coarse, 1e-3);
  EXPECT_LT(coarse, 1e-12);
  EXPECT_LT(fine, 1e-12);
}

TEST(PoissonFd, ZeroForcingGivesZero) {
  const Box box({{"x0", 0, 1}, {"x1", 0, 1}});
  const auto sol = solve_poisson_fd(box, [](double, double) { return 0.0; }, LaplaceSign::Positive, 17);
  for (double v : sol.values[0]) EXPECT_EQ(v, 0.0);
}

TEST(PoissonFd, MaximumPrinciple) {
  const Box box({{"x0", -1, 1}, {"x1", -1, 1}});
  auto f = [](double x, double y) { return 1.0 + x * x + std::exp(y); };
  const auto neg = solve_poisson_fd(box, f, LaplaceSign::Negative, 33);
  const auto pos = solve_poisson_fd(box, f, LaplaceSign::Positive, 33);
  for (std::size_t k = 0; k < neg.values[0].size(); ++k) {
    EXPECT_GE(neg.values[0][k], 0.0);
    EXPECT_LE(pos.values[0][k], 0.0);
  }
}

TEST(PoissonFd, RejectsCoarseGrid) {
  const Box box({{"x0", 0, 1}, {"x1", 0, 1}});
  EXPECT_THROW(solve_poisson_fd(box, [](double, double) { return 1.0; }, LaplaceSign::Positive, 8),
               std::invalid_argument);
}

TEST(OcpFd, RelationHoldsExactlyAndEquationsAtNodes) {
  const double mu[] = {2.0, 0.1};
  const auto s = solve_ocp_poisson_fd(mu, 33);
  double r1 = 0.0, r3 = 0.0;
  for (std::size_t i = 1; i + 1 < s.n; ++i) {
    for (std::size_t j = 1; j + 1 < s.n; ++j) {
      EXPECT_EQ(mu[1] * s.at(1, i, j), s.at(2, i, j));
      r1 = std::max(r1, std::abs(s.at(0, i, j) + neg_laplace(s, 2, i, j) - mu[0]));
      r3 = std::max(r3, std::abs(neg_laplace(s, 0, i, j) - s.at(1, i, j)));
    }
  }
  EXPECT_LT(r1, 1e-9);
  EXPECT_LT(r3, 1e-9);
  for (std::size_t k = 0; k < s.n; ++k) {
    EXPECT_EQ(s.at(0, 0, k), 0.0);
    EXPECT_EQ(s.at(2, k, s.n - 1), 0.0);
  }
}

TEST(OcpFd, HeavyPenaltyKillsControlAndState) {
  const double mu[] = {3.0, 1e6};
  const auto s = solve_ocp_poisson_fd(mu, 33);
  for (double v : s.values[0]) EXPECT_LT(std::abs(v), 1e-4);
}

TEST(OcpFd, SmallPenaltyTracksTarget) {
  // With a cheap control the state approaches the desired value mu1 inside.
  const double cheap[] = {2.0, 1e-6};
  const double dear[] = {2.0, 1.0};
  const double centre[] = {0.0, 0.0};
  const double y_cheap = interpolate(solve_ocp_poisson_fd(cheap, 65), centre)[0];
  const double y_dear = interpolate(solve_ocp_poisson_fd(dear, 65), centre)[0];
  EXPECT_NEAR(y_cheap, 2.0, 0.05);
  EXPECT_LT(y_dear, y_cheap);
  EXPECT_GT(y_dear, 0.0);
}

TEST(OcpFd, SelfConvergesAtSecondOrder) {
  // Cauchy differences at the centre shrink by ~4 per halving of h.
  const double mu[] = {3.0, 0.01};
  const double centre[] = {0.0, 0.0};
  const double y33 = interpolate(solve_ocp_poisson_fd(mu, 33), centre)[0];
  const double y65 = interpolate(solve_ocp_poisson_fd(mu, 65), centre)[0];
  const double y129 = interpolate(solve_ocp_poisson_fd(mu, 129), centre)[0];
  EXPECT_GE(std::abs(y33 - y65) / std::abs(y65 - y129), 3.5);
}

TEST(Interpolate, NodesLinearFieldsAndBounds) {
  GridSolution s{Box({{"x0", 0, 2}, {"x1", -1, 1}}), 9, {"lin", "one"}, {}};
  s.values.assign(2, std::vector<double>(81));
  for (std::size_t i = 0; i < 9; ++i) {
    for (std::size_t j = 0; j < 9; ++j) {
      s.values[0][i * 9 + j] = 3.0 * s.coord(0, i) - 2.0 * s.coord(1, j) + 0.5 * s.coord(0, i) * s.coord(1, j);
      s.values[1][i * 9 + j] = 7.25;
    }
  }
  const double node[] = {s.coord(0, 3), s.coord(1, 5)};
  EXPECT_EQ(interpolate(s, node)[0], s.at(0, 3, 5));
  SplitMix64 rng(1);
  for (int k = 0; k < 100; ++k) {
    const double x[] = {rng.uniform(0, 2), rng.uniform(-1, 1)};
    const auto v = interpolate(s, x);
    EXPECT_NEAR(v[0], 3.0 * x[0] - 2.0 * x[1] + 0.5 * x[0] * x[1], 1e-13);
    EXPECT_EQ(v[1], 7.25);
  }
  const double outside[] = {2.5, 0.0};
  EXPECT_THROW(interpolate(s, outside), std::out_of_range);
}

TEST(GridCsv, HeaderAndRowCount) {
  const Box box({{"x0", 0, 1}, {"x1", 0, 1}});
  const auto sol = solve_poisson_fd(box, [](double, double) { return 1.0; }, LaplaceSign::Positive, 9);
  std::ostringstream os;
  write_csv(os, sol);
  const auto text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "x0,x1,w");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 82);
}
