#include <cmath>
#include <limits>
#include <sstream>

#include "gtest/gtest.h"
#include "pinn/problems.hpp"
#include "pinn/training.hpp"

using namespace pinn;
using ad::Expr;

namespace {

Surrogate exact_model(const Problem& p) {
  return Surrogate(p, [&p](ad::Graph& g, std::span<const Expr> raw) {
    const std::size_t d = p.domain.dim();
    return p.exact_expr(g, raw.first(d), raw.subspan(d));
  });
}

Surrogate constant_model(const Problem& p, double value) {
  return Surrogate(p, [&p, value](ad::Graph& g, std::span<const Expr>) {
    return std::vector<Expr>(p.fields.size(), g.constant(value));
  });
}

SamplingConfig small_sampling(const Problem& p, std::size_t n_param = 1) {
  SamplingConfig s;
  s.n_interior = 36;
  s.n_boundary = 24;
  s.n_parameter = p.parameters.dim() == 0 ? 1 : n_param;
  s.seed = 3;
  return s;
}

// Central differences of the total loss against the engine gradient.
void expect_gradient_matches(Surrogate& model, const LossSpec& spec) {
  LossEngine engine(model, spec, 8);
  std::vector<double> theta(model.parameters().begin(), model.parameters().end());
  std::vector<double> grad;
  engine.evaluate(theta, &grad);
  ASSERT_EQ(grad.size(), theta.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(theta[i]));
    auto shifted = theta;
    shifted[i] = theta[i] + h;
    const double up = engine.evaluate(shifted).total;
    shifted[i] = theta[i] - h;
    const double down = engine.evaluate(shifted).total;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1.0, std::abs(fd)));
  }
  EXPECT_LT(worst, 1e-5);
}

}  // namespace

TEST(Loss, ExactSolutionHasNoLoss) {
  for (const char* name : {"poisson1", "poisson2"}) {
    const auto& p = find_problem(name);
    auto model = exact_model(p);
    const auto spec = make_loss_spec(p, small_sampling(p, 4));
    for (const auto& mu : spec.mu) {
      EXPECT_LT(boundary_loss(model, spec, mu), 1e-20) << name;
      EXPECT_LT(residual_loss(model, spec, mu), 1e-14) << name;
    }
    EXPECT_LT(global_loss(model, spec), 1e-14) << name;
  }
}

TEST(Loss, ConstantOneOnPoissonBoundary) {
  const auto& p = find_problem("poisson1");
  auto model = constant_model(p, 1.0);
  const auto spec = make_loss_spec(p, small_sampling(p));
  EXPECT_DOUBLE_EQ(boundary_loss(model, spec, {}), 1.0);
}

TEST(Loss, ZeroFieldPoissonResidual) {
  // Mean of sin^2(pi x) sin^2(pi y) over a cell-centred grid is exactly 1/4.
  const auto& p = find_problem("poisson1");
  auto model = constant_model(p, 0.0);
  const auto spec = make_loss_spec(p, small_sampling(p));
  EXPECT_NEAR(residual_loss(model, spec, {}), 0.25, 1e-14);
  EXPECT_EQ(boundary_loss(model, spec, {}), 0.0);
}

TEST(Loss, ZeroFieldBurgersInitialCondition) {
  const auto& p = find_problem("burgers");
  auto model = constant_model(p, 0.0);
  SamplingConfig s = small_sampling(p);
  s.n_boundary = 400;
  const auto spec = make_loss_spec(p, s);
  LossEngine engine(model, spec);
  const auto v = engine.evaluate({});
  ASSERT_EQ(v.per_condition.size(), p.boundary_conditions.size());
  double ic = 0.0;
  for (std::size_t l = 0; l < v.per_condition.size(); ++l) {
    if (p.boundary_conditions[l].name == "initial") {
      ic = v.per_condition[l];
    } else {
      EXPECT_EQ(v.per_condition[l], 0.0);
    }
  }
  EXPECT_NEAR(ic, 0.5, 0.02);
  EXPECT_EQ(v.mse_p, 0.0);
}

TEST(Loss, PointwiseConditionMismatch) {
  const auto& p = find_problem("burgers");
  auto model = constant_model(p, 0.0);
  std::size_t ic = p.boundary_conditions.size();
  for (std::size_t l = 0; l < p.boundary_conditions.size(); ++l) {
    if (p.boundary_conditions[l].name == "initial") ic = l;
  }
  ASSERT_LT(ic, p.boundary_conditions.size());
  std::vector<double> pts;
  for (int k = 0; k < 100; ++k) {
    pts.push_back(-1.0 + 2.0 * k / 99.0);
    pts.push_back(0.0);
  }
  const auto m = condition_mismatch(model, ic, pts, {});
  ASSERT_EQ(m.size(), 100u);
  for (int k = 0; k < 100; ++k) EXPECT_NEAR(m[k], std::abs(std::sin(3.14159265358979323846 * pts[2 * k])), 1e-15);
  EXPECT_THROW(condition_mismatch(model, 99, pts, {}), std::out_of_range);
}

TEST(Loss, EngineAgreesWithPerSampleLosses) {
  const auto& p = find_problem("poisson_param");
  ModelConfig mc;
  mc.hidden = {6};
  mc.seed = 11;
  Surrogate model(p, mc);
  const auto spec = make_loss_spec(p, small_sampling(p, 6));
  double sum = 0.0;
  for (const auto& mu : spec.mu) sum += boundary_loss(model, spec, mu) + residual_loss(model, spec, mu);
  const double g = global_loss(model, spec);
  EXPECT_NEAR(g, sum / static_cast<double>(spec.mu.size()), 1e-13 * std::abs(g));
  LossEngine engine(model, spec);
  const auto v = engine.evaluate(model.parameters());
  EXPECT_NEAR(v.total, g, 1e-13 * std::abs(g));
  EXPECT_NEAR(v.total, v.mse_b + v.mse_p, 1e-15 * v.total);
}

TEST(Loss, DuplicatedParameterSamplesKeepTheMean) {
  const auto& p = find_problem("poisson_param");
  ModelConfig mc;
  mc.hidden = {6};
  mc.seed = 11;
  Surrogate model(p, mc);
  auto spec = make_loss_spec(p, small_sampling(p, 1));
  const double once = global_loss(model, spec);
  spec.mu = {spec.mu[0], spec.mu[0], spec.mu[0]};
  EXPECT_NEAR(global_loss(model, spec), once, 1e-14 * once);
}

TEST(Loss, LaneCountDoesNotChangeTheValue) {
  const auto& p = find_problem("burgers");
  ModelConfig mc;
  mc.hidden = {5, 5};
  mc.seed = 4;
  Surrogate model(p, mc);
  const auto spec = make_loss_spec(p, small_sampling(p));
  std::vector<double> g1, g2;
  const double a = LossEngine(model, spec, 1).evaluate(model.parameters(), &g1).total;
  const double b = LossEngine(model, spec, 64).evaluate(model.parameters(), &g2).total;
  EXPECT_NEAR(a, b, 1e-13 * a);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g1[i], g2[i], 1e-12 * std::max(1.0, std::abs(g1[i])));
}

TEST(Loss, ValidateRejectsMismatchedSpec) {
  const auto& p = find_problem("poisson_param");
  auto spec = make_loss_spec(p, small_sampling(p, 2));
  spec.mu[0] = {1.0};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = make_loss_spec(p, small_sampling(p, 2));
  spec.boundary.clear();
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(Gradient, FlatPoisson) {
  const auto& p = find_problem("poisson1");
  ModelConfig mc;
  mc.hidden = {5, 4};
  mc.seed = 1;
  Surrogate model(p, mc);
  expect_gradient_matches(model, make_loss_spec(p, small_sampling(p)));
}

TEST(Gradient, LearnableFeature) {
  const auto& p = find_problem("poisson1");
  ModelConfig mc;
  mc.hidden = {4};
  mc.seed = 2;
  mc.features = {feature_preset("poisson_sine_learnable")};
  Surrogate model(p, mc);
  EXPECT_GT(model.parameter_count(), model.network_parameter_count());
  expect_gradient_matches(model, make_loss_spec(p, small_sampling(p)));
}

TEST(Gradient, BurgersTanh) {
  const auto& p = find_problem("burgers");
  ModelConfig mc;
  mc.hidden = {4, 4};
  mc.activation = Activation::Tanh;
  mc.seed = 3;
  Surrogate model(p, mc);
  expect_gradient_matches(model, make_loss_spec(p, small_sampling(p)));
}

TEST(Gradient, OcpPiArchWithLearnedRelation) {
  const auto& p = find_problem("ocp_poisson");
  ModelConfig mc;
  mc.architecture = "pi_arch";
  mc.learned_relation = true;
  mc.relation_hidden = {3};
  mc.hidden = {4};
  mc.seed = 4;
  Surrogate model(p, mc);
  expect_gradient_matches(model, make_loss_spec(p, small_sampling(p, 4)));
}

TEST(Gradient, StokesPiArch) {
  const auto& p = find_problem("ocp_stokes");
  ModelConfig mc;
  mc.architecture = "pi_arch";
  mc.hidden = {4};
  mc.seed = 5;
  Surrogate model(p, mc);
  auto s = small_sampling(p, 2);
  s.n_interior = 16;
  s.n_boundary = 16;
  expect_gradient_matches(model, make_loss_spec(p, s));
}

TEST(Loss, HardwiredRelationZeroesItsEquation) {
  const auto& p = find_problem("ocp_poisson");
  ModelConfig mc;
  mc.architecture = "pi_arch";
  mc.hidden = {6};
  mc.seed = 9;
  Surrogate model(p, mc);
  const auto spec = make_loss_spec(p, small_sampling(p, 4));
  LossEngine engine(model, spec);
  const auto v = engine.evaluate(model.parameters());
  ASSERT_EQ(v.per_equation.size(), 3u);
  EXPECT_EQ(v.per_equation[1], 0.0);
  EXPECT_GT(v.per_equation[0], 0.0);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> x = {1.0, -2.0, 3.0};
  const std::vector<double> g(3, 0.0);
  AdamState st(3, 0.1);
  for (int k = 0; k < 5; ++k) adam_step(x, g, st);
  EXPECT_EQ(x, (std::vector<double>{1.0, -2.0, 3.0}));
  EXPECT_EQ(st.step, 5u);
}

TEST(Adam, FirstStepHasLearningRateSize) {
  std::vector<double> x = {1.0, 1.0};
  const std::vector<double> g = {0.5, -20.0};
  AdamState st(2, 0.01);
  adam_step(x, g, st);
  EXPECT_NEAR(x[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(x[1], 1.0 + 0.01, 1e-9);
}

TEST(Adam, MinimisesAQuadratic) {
  std::vector<double> x = {3.0, -4.0};
  AdamState st(2, 0.05);
  double prev = x[0] * x[0] + x[1] * x[1];
  for (int k = 0; k < 40; ++k) {
    const std::vector<double> g = {2 * x[0], 2 * x[1]};
    adam_step(x, g, st);
    const double f = x[0] * x[0] + x[1] * x[1];
    EXPECT_LT(f, prev);
    prev = f;
  }
}

TEST(Adam, ScalarQuadraticRecurrence) {
  // theta^2 from theta = 1 with lr 0.1: monotone descent until the first
  // overshoot at step 12, then damped oscillation.
  std::vector<double> x = {1.0};
  AdamState st(1, 0.1);
  double prev = 1.0;
  for (int k = 1; k <= 50; ++k) {
    const std::vector<double> g = {2 * x[0]};
    adam_step(x, g, st);
    if (k <= 11) {
      EXPECT_LT(std::abs(x[0]), prev) << k;
    }
    if (k == 11) EXPECT_NEAR(x[0], 0.005131501948057199, 1e-12);
    if (k == 12) EXPECT_NEAR(x[0], -0.05893789063004727, 1e-12);
    if (k == 19) EXPECT_NEAR(x[0], -0.2730857716970153, 1e-12);
    if (k == 50) EXPECT_NEAR(x[0], -0.004818223222661105, 1e-12);
    prev = std::abs(x[0]);
  }
}

TEST(Adam, RejectsSizeMismatch) {
  std::vector<double> x = {1.0};
  const std::vector<double> g = {1.0, 2.0};
  AdamState st(1);
  EXPECT_THROW(adam_step(x, g, st), std::invalid_argument);
}

TEST(Train, ZeroEpochsKeepsTheModel) {
  const auto& p = find_problem("poisson1");
  ModelConfig mc;
  mc.hidden = {5};
  mc.seed = 6;
  Surrogate model(p, mc);
  const std::vector<double> before(model.parameters().begin(), model.parameters().end());
  TrainOptions opt;
  opt.max_epochs = 0;
  const auto run = train(model, make_loss_spec(p, small_sampling(p)), opt);
  EXPECT_TRUE(run.history.empty());
  EXPECT_EQ(run.final_parameters, before);
  EXPECT_EQ(std::vector<double>(model.parameters().begin(), model.parameters().end()), before);
  EXPECT_EQ(run.reason, Termination::MaxEpochs);
}

TEST(Train, LossDecreasesAndIsDeterministic) {
  const auto& p = find_problem("poisson1");
  const auto spec = make_loss_spec(p, small_sampling(p));
  TrainOptions opt;
  opt.learning_rate = 0.01;
  opt.max_epochs = 200;
  auto once = [&] {
    ModelConfig mc;
    mc.hidden = {8};
    mc.seed = 7;
    Surrogate model(p, mc);
    return train(model, spec, opt);
  };
  const auto a = once();
  const auto b = once();
  ASSERT_EQ(a.history.size(), 200u);
  EXPECT_EQ(a.history.front().epoch, 1u);
  EXPECT_LT(a.final_loss.total, 0.5 * a.history.front().total);
  EXPECT_EQ(a.final_parameters, b.final_parameters);
  for (std::size_t e = 0; e < a.history.size(); ++e) EXPECT_EQ(a.history[e].total, b.history[e].total);
  std::ostringstream sa, sb;
  write_history_csv(sa, a);
  write_history_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str().substr(0, sa.str().find('\n')), "epoch,mse_b,mse_p,total,wall_ms");
}

TEST(Train, StopsAtTolerance) {
  const auto& p = find_problem("poisson1");
  ModelConfig mc;
  mc.hidden = {8};
  mc.seed = 7;
  Surrogate model(p, mc);
  TrainOptions opt;
  opt.learning_rate = 0.01;
  opt.max_epochs = 5000;
  opt.loss_tol = 1e-2;
  const auto run = train(model, make_loss_spec(p, small_sampling(p)), opt);
  EXPECT_EQ(run.reason, Termination::LossTolerance);
  ASSERT_TRUE(run.epoch_reached_tol.has_value());
  EXPECT_EQ(*run.epoch_reached_tol, run.history.size());
  EXPECT_LE(run.history.back().total, 1e-2);
  EXPECT_GT(run.history[run.history.size() - 2].total, 1e-2);
}

TEST(Train, NonFiniteLossStopsAndKeepsLastGoodParameters) {
  const auto& p = find_problem("poisson1");
  ModelConfig mc;
  mc.hidden = {4};
  mc.seed = 8;
  mc.features = {{"bad", "log(x0 - 2)", {}}};
  Surrogate model(p, mc);
  const std::vector<double> before(model.parameters().begin(), model.parameters().end());
  TrainOptions opt;
  opt.max_epochs = 10;
  const auto run = train(model, make_loss_spec(p, small_sampling(p)), opt);
  EXPECT_EQ(run.reason, Termination::Diverged);
  EXPECT_EQ(run.final_parameters, before);
  EXPECT_EQ(to_string(run.reason), "diverged");
}

TEST(Train, CallbackCanStop) {
  const auto& p = find_problem("poisson1");
  ModelConfig mc;
  mc.hidden = {4};
  Surrogate model(p, mc);
  TrainOptions opt;
  opt.max_epochs = 100;
  opt.on_epoch = [](const EpochRecord& r) { return r.epoch < 3; };
  const auto run = train(model, make_loss_spec(p, small_sampling(p)), opt);
  EXPECT_EQ(run.history.size(), 3u);
}
