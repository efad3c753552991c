#include <cmath>

#include "gtest/gtest.h"
#include "pinn/piarch.hpp"
#include "pinn/problems.hpp"
#include "pinn/rng.hpp"
#include "pinn/training.hpp"

using namespace pinn;
using ad::Expr;

namespace {

std::vector<Expr> vars(ad::Graph& g, const std::vector<std::string>& names) {
  std::vector<Expr> out;
  for (const auto& n : names) out.push_back(g.variable(n));
  return out;
}

}  // namespace

TEST(Compose, EmptyRelationsMatchPlainNetwork) {
  ad::Graph g;
  const NetworkSpec spec{3, {6, 5}, 2, Activation::Tanh, 42};
  auto m = ComposedModel::compose(spec, {"a", "b"}, {}, {"a", "b"}, {"x", "y", "s"}, g);
  ad::Graph g2;
  auto net = Network::init(spec, g2);
  EXPECT_TRUE(m.flat());
  ASSERT_EQ(m.parameters(), std::vector<double>(net.parameters().begin(), net.parameters().end()));
  const double in[] = {0.3, -0.2, 0.9};
  EXPECT_EQ(m.forward(in, in), net.forward(in));
}

TEST(Compose, FieldOrderFollowsModelFields) {
  ad::Graph g;
  const NetworkSpec spec{2, {4}, 2, Activation::Softplus, 1};
  RelationXi xi{"z", {"u", "mu2"}, "mu2*u", std::nullopt};
  auto m = ComposedModel::compose(spec, {"y", "u"}, {xi}, {"y", "u", "z"}, {"x0", "mu2"}, g);
  const double in[] = {0.25, 0.5};
  const auto out = m.forward(in, in);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[2], 0.5 * out[1]);
}

TEST(Compose, RejectsBadCoverage) {
  const NetworkSpec spec{2, {4}, 2, Activation::Softplus, 1};
  const std::vector<std::string> fields = {"y", "u", "z"};
  RelationXi z{"z", {"u", "mu2"}, "mu2*u", std::nullopt};
  {
    ad::Graph g;
    EXPECT_THROW(ComposedModel::compose(spec, {"y", "u"}, {}, fields, {"mu2"}, g), std::invalid_argument);
  }
  {
    ad::Graph g;
    RelationXi again{"u", {"y"}, "2*y", std::nullopt};
    EXPECT_THROW(ComposedModel::compose(spec, {"y", "u"}, {z, again}, fields, {"mu2"}, g), std::invalid_argument);
  }
  {
    ad::Graph g;
    RelationXi unknown{"z", {"q"}, "q", std::nullopt};
    EXPECT_THROW(ComposedModel::compose(spec, {"y", "u"}, {unknown}, fields, {"mu2"}, g), std::invalid_argument);
  }
  {
    // A stage may not read a field produced by a later stage.
    ad::Graph g;
    const NetworkSpec one{2, {4}, 1, Activation::Softplus, 1};
    RelationXi u_from_z{"u", {"z"}, "z", std::nullopt};
    RelationXi z_from_u{"z", {"u"}, "u", std::nullopt};
    EXPECT_THROW(ComposedModel::compose(one, {"y"}, {u_from_z, z_from_u}, fields, {}, g), std::invalid_argument);
  }
  {
    ad::Graph g;
    EXPECT_THROW(ComposedModel::compose(spec, {"y"}, {z}, fields, {"mu2"}, g), std::invalid_argument);
  }
}

TEST(Compose, ChainedStages) {
  ad::Graph g;
  const NetworkSpec spec{1, {3}, 1, Activation::Tanh, 3};
  RelationXi b{"b", {"a"}, "2*a", std::nullopt};
  RelationXi c{"c", {"b", "s"}, "b + s", std::nullopt};
  auto m = ComposedModel::compose(spec, {"a"}, {b, c}, {"c", "b", "a"}, {"s"}, g);
  const double in[] = {0.7};
  const double raw[] = {10.0};
  const auto out = m.forward(in, raw);
  EXPECT_EQ(out[1], 2 * out[2]);
  EXPECT_EQ(out[0], out[1] + 10.0);
  auto x = vars(g, {"in", "s"});
  const auto ex = m.forward_graph(std::span(x).first(1), std::span(x).subspan(1));
  ad::Bindings bind;
  bind[g.var_id(x[0])] = 0.7;
  bind[g.var_id(x[1])] = 10.0;
  const auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) bind[m.parameter_vars()[i]] = params[i];
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(ad::evaluate(ex[k], bind), out[k], 1e-15);
}

TEST(PiArch, OcpPoissonRelationIsExact) {
  const auto& p = find_problem("ocp_poisson");
  ModelConfig mc;
  mc.architecture = "pi_arch";
  mc.hidden = {8, 8};
  mc.seed = 5;
  Surrogate s(p, mc);
  ASSERT_EQ(s.model()->base_fields(), (std::vector<std::string>{"y", "u"}));
  const auto pts = latin_hypercube(p.domain, 200, 1);
  for (double m2 : {0.01, 0.5, 1.0}) {
    const double mu[] = {2.0, m2};
    auto fields_at = [&](std::span<const double> x, std::span<const double> m) { return s.predict_point(x, m); };
    EXPECT_EQ(relation_violation(p, fields_at, pts.coords, 2, mu), 0.0);
  }
}

TEST(PiArch, OcpStokesRelationIsExact) {
  const auto& p = find_problem("ocp_stokes");
  ModelConfig mc;
  mc.architecture = "pi_arch";
  mc.hidden = {6};
  mc.seed = 2;
  Surrogate s(p, mc);
  EXPECT_EQ(s.model()->base_fields(), (std::vector<std::string>{"v1", "v2", "p", "r", "u1", "u2"}));
  const auto pts = latin_hypercube(p.domain, 100, 3);
  const double mu[] = {1.2};
  auto fields_at = [&](std::span<const double> x, std::span<const double> m) { return s.predict_point(x, m); };
  EXPECT_EQ(relation_violation(p, fields_at, pts.coords, 2, mu), 0.0);
}

TEST(PiArch, UntrainedFlatModelViolatesRelation) {
  const auto& p = find_problem("ocp_poisson");
  ModelConfig mc;
  mc.hidden = {8, 8};
  mc.seed = 5;
  Surrogate s(p, mc);
  const auto pts = latin_hypercube(p.domain, 50, 1);
  const double mu[] = {2.0, 0.01};
  auto fields_at = [&](std::span<const double> x, std::span<const double> m) { return s.predict_point(x, m); };
  EXPECT_GT(relation_violation(p, fields_at, pts.coords, 2, mu), 0.0);
}

TEST(PiArch, LearnedRelationIsTrainable) {
  const auto& p = find_problem("ocp_poisson");
  ModelConfig mc;
  mc.architecture = "pi_arch";
  mc.learned_relation = true;
  mc.relation_hidden = {4};
  mc.hidden = {5};
  mc.seed = 8;
  Surrogate s(p, mc);
  // Base: 4 inputs -> 5 -> 2; relation: 2 inputs -> 4 -> 1.
  EXPECT_EQ(s.parameter_count(), (4 * 5 + 5) + (5 * 2 + 2) + (2 * 4 + 4) + (4 + 1));
  const auto pts = latin_hypercube(p.domain, 20, 1);
  const double mu[] = {2.0, 0.01};
  auto fields_at = [&](std::span<const double> x, std::span<const double> m) { return s.predict_point(x, m); };
  EXPECT_GT(relation_violation(p, fields_at, pts.coords, 2, mu), 0.0);
}

TEST(PiArch, RequiresDeclaredRelation) {
  ModelConfig mc;
  mc.architecture = "pi_arch";
  mc.hidden = {4};
  EXPECT_THROW(Surrogate(find_problem("poisson1"), mc), std::invalid_argument);
  EXPECT_THROW(relation_violation(find_problem("poisson1"), {}, {}, 2, {}), std::invalid_argument);
}
