#include <algorithm>
#include <cmath>

#include "gtest/gtest.h"
#include "pinn/network.hpp"
#include "pinn/rng.hpp"

using namespace pinn;

namespace {

struct Fixture {
  ad::Graph g;
  std::vector<ad::Expr> inputs;
  std::vector<ad::VarId> ids;
  explicit Fixture(std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      inputs.push_back(g.variable("in" + std::to_string(i)));
      ids.push_back(g.var_id(inputs.back()));
    }
  }
  ad::Bindings bind(const Network& net, std::span<const double> x) const {
    ad::Bindings b;
    for (std::size_t i = 0; i < ids.size(); ++i) b[ids[i]] = x[i];
    for (std::size_t k = 0; k < net.parameter_count(); ++k) b[net.parameter_vars()[k]] = net.parameters()[k];
    return b;
  }
};

}  // namespace

TEST(NetworkInit, SameSeedIsBitIdentical) {
  ad::Graph g1, g2;
  NetworkSpec spec{4, {10, 10}, 2, Activation::Softplus, 42};
  auto a = Network::init(spec, g1);
  auto b = Network::init(spec, g2);
  ASSERT_EQ(a.parameter_count(), b.parameter_count());
  EXPECT_TRUE(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  spec.seed = 43;
  auto c = Network::init(spec, g1);
  EXPECT_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));
}

TEST(NetworkInit, ParameterCount) {
  ad::Graph g;
  EXPECT_EQ(Network::init({5, {}, 1, Activation::Softplus, 0}, g).parameter_count(), 6u);
  EXPECT_EQ((NetworkSpec{3, {20, 10, 5}, 1}.parameter_count()), 4u * 20 + 21 * 10 + 11 * 5 + 6);
}

TEST(NetworkInit, WeightBoundAndZeroBiases) {
  ad::Graph g;
  auto net = Network::init({10, {7}, 3, Activation::Tanh, 9}, g);
  const auto p = net.parameters();
  for (std::size_t k = 0; k < 70; ++k) EXPECT_LE(std::abs(p[k]), std::sqrt(0.1));
  for (std::size_t k = 70; k < 77; ++k) EXPECT_EQ(p[k], 0.0);
}

TEST(NetworkInit, RejectsZeroWidth) {
  ad::Graph g;
  EXPECT_THROW(Network::init({2, {3, 0}, 1}, g), std::invalid_argument);
}

TEST(NetworkForward, ZeroParametersGiveZero) {
  ad::Graph g;
  auto net = Network::init({3, {4, 4}, 2, Activation::Softplus, 1}, g);
  std::vector<double> zeros(net.parameter_count(), 0.0);
  net.set_parameters(zeros);
  const double x[] = {0.3, -2.0, 5.0};
  for (double v : net.forward(x)) EXPECT_EQ(v, 0.0);
}

TEST(NetworkForward, NoHiddenLayerIsAffine) {
  ad::Graph g;
  auto net = Network::init({2, {}, 1, Activation::Softplus, 4}, g);
  const double a[] = {0.0, 0.0}, b[] = {1.0, 0.0}, c[] = {0.0, 1.0}, d[] = {2.0, -3.0};
  const double f0 = net.forward(a)[0];
  const double fx = net.forward(b)[0] - f0;
  const double fy = net.forward(c)[0] - f0;
  EXPECT_NEAR(net.forward(d)[0], f0 + 2.0 * fx - 3.0 * fy, 1e-14);
}

TEST(NetworkForward, DeterministicAndDimensionChecked) {
  ad::Graph g;
  auto net = Network::init({2, {8, 8}, 1, Activation::Tanh, 2}, g);
  const double x[] = {0.1, 0.9};
  EXPECT_EQ(net.forward(x), net.forward(x));
  const double bad[] = {1.0};
  EXPECT_THROW(net.forward(bad), std::invalid_argument);
}

TEST(NetworkGraph, MatchesNumericForwardAtRandomPoints) {
  for (auto act : {Activation::Softplus, Activation::Tanh}) {
    Fixture f(3);
    auto net = Network::init({3, {10, 10}, 2, act, 17}, f.g);
    const auto outs = net.forward_graph(f.inputs);
    SplitMix64 rng(1);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      std::vector<double> x = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      const auto num = net.forward(x);
      const auto sym = ad::evaluate(outs, f.bind(net, x));
      for (std::size_t o = 0; o < 2; ++o) worst = std::max(worst, std::abs(num[o] - sym[o]));
    }
    EXPECT_LT(worst, 1e-15);
  }
}

TEST(NetworkGraph, ParameterVarsMatchGraphVariables) {
  Fixture f(2);
  auto net = Network::init({2, {5}, 1, Activation::Softplus, 3}, f.g);
  const auto outs = net.forward_graph(f.inputs);
  auto vars = ad::reachable_variables(outs);
  std::vector<ad::VarId> expected(net.parameter_vars().begin(), net.parameter_vars().end());
  expected.insert(expected.end(), f.ids.begin(), f.ids.end());
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(vars, expected);
}

TEST(NetworkGraph, SecondInputDerivativesMatchFiniteDifferences) {
  Fixture f(2);
  auto net = Network::init({2, {6, 6}, 1, Activation::Softplus, 5}, f.g);
  const auto out = net.forward_graph(f.inputs)[0];
  const auto dxx = ad::derive(out, f.ids[0], 2);
  SplitMix64 rng(8);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> x = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto b = f.bind(net, x);
    EXPECT_TRUE(std::isfinite(ad::evaluate(ad::derive(out, f.ids[0]), b)));
    EXPECT_LT(ad::fd_check(dxx, b, 1e-5), 1e-5);
    // Direct second difference of the numeric forward pass.
    const double h = 1e-4;
    std::vector<double> up = x, down = x;
    up[0] += h;
    down[0] -= h;
    const double fd2 = (net.forward(up)[0] - 2.0 * net.forward(x)[0] + net.forward(down)[0]) / (h * h);
    EXPECT_NEAR(ad::evaluate(dxx, b), fd2, 1e-5);
  }
}

TEST(NetworkGraph, ParameterUpdateIsSeenByNextEvaluation) {
  Fixture f(1);
  auto net = Network::init({1, {3}, 1, Activation::Tanh, 6}, f.g);
  const auto out = net.forward_graph(f.inputs)[0];
  const double x[] = {0.4};
  const double before = ad::evaluate(out, f.bind(net, x));
  std::vector<double> p(net.parameters().begin(), net.parameters().end());
  p.back() += 1.0;  // output bias
  net.set_parameters(p);
  EXPECT_NEAR(ad::evaluate(out, f.bind(net, x)), before + 1.0, 1e-14);
  EXPECT_NEAR(net.forward(x)[0], before + 1.0, 1e-14);
}

TEST(NetworkGraph, RepeatedBuildReusesNodes) {
  Fixture f(2);
  auto net = Network::init({2, {4}, 1, Activation::Softplus, 0}, f.g);
  const auto a = net.forward_graph(f.inputs);
  const auto n = f.g.node_count();
  const auto b = net.forward_graph(f.inputs);
  EXPECT_EQ(a, b);
  EXPECT_EQ(f.g.node_count(), n);
}

TEST(NetworkCheckpoint, JsonRoundTrip) {
  ad::Graph g;
  auto net = Network::init({2, {3}, 1, Activation::Softplus, 12}, g);
  const auto j = parameters_to_json(net.parameters());
  EXPECT_TRUE(j.is_array());
  EXPECT_EQ(parameters_from_json(nlohmann::json::parse(j.dump())),
            std::vector<double>(net.parameters().begin(), net.parameters().end()));
  EXPECT_THROW(parameters_from_json(nlohmann::json::object()), std::invalid_argument);
}
