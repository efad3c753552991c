#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gtest/gtest.h"
#include "json.hpp"
#include "pinn/cli.hpp"
#include "pinn/reference.hpp"

using namespace pinn;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.ini");
}

std::size_t error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  ADD_FAILURE() << "no ConfigError for:\n" << text;
  return 0;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("pinn_cli_test_" + name);
  fs::remove_all(dir);
  return dir;
}

const char* kTiny = R"(
[experiment]
problem = poisson1
seed = 4

[model]
hidden = 6
feature = poisson_sine

[sampling]
n_interior = 25
n_boundary = 20

[training]
learning_rate = 0.01
max_epochs = 30

[evaluation]
grid = 11
)";

}  // namespace

TEST(Config, DefaultsComeFromTheProblem) {
  const auto c = parse("[experiment]\nproblem = burgers\n");
  EXPECT_EQ(c.hidden, (std::vector<std::size_t>{20, 10, 5}));
  EXPECT_EQ(c.activation, Activation::Tanh);
  EXPECT_EQ(c.learning_rate, 0.006);
  EXPECT_EQ(c.sampling.n_interior, 8000u);
  EXPECT_EQ(c.sampling.interior, SamplerKind::LatinHypercube);
  EXPECT_EQ(c.feature_presets, (std::vector<std::string>{"burgers_ic"}));
  EXPECT_EQ(c.eval_mu.size(), 1u);
  EXPECT_TRUE(c.eval_mu[0].empty());
}

TEST(Config, OverridesAndRepeatableKeys) {
  const auto c = parse(R"(
; comment
[experiment]
problem = ocp_poisson   # trailing comment
seed = 12
[model]
architecture = flat
hidden = 8, 4
feature_expr = bump: x0*x1 | a = 2, b = 0.5
feature_expr = x0 + mu2
[sampling]
parameter = lhs
n_parameter = 7
[evaluation]
mu = 1, 0.5
mu = 2, 0.25
)");
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.sampling.seed, 12u);
  EXPECT_EQ(c.hidden, (std::vector<std::size_t>{8, 4}));
  ASSERT_EQ(c.feature_exprs.size(), 2u);
  EXPECT_EQ(c.feature_exprs[0].name, "bump");
  EXPECT_EQ(c.feature_exprs[0].parameters.size(), 2u);
  EXPECT_EQ(c.feature_exprs[0].parameters[1].second, 0.5);
  EXPECT_EQ(c.feature_exprs[1].expression, "x0 + mu2");
  EXPECT_EQ(c.sampling.parameter, SamplerKind::LatinHypercube);
  EXPECT_EQ(c.eval_mu, (std::vector<std::vector<double>>{{1, 0.5}, {2, 0.25}}));
  EXPECT_EQ(c.features().size(), 3u);  // the ocp_bubble default stays
}

TEST(Config, ZeroHiddenLayers) {
  EXPECT_TRUE(parse("[experiment]\nproblem = poisson1\n[model]\nhidden = none\n").hidden.empty());
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_EQ(error_line("[experiment]\nproblem = nope\n"), 2u);
  EXPECT_EQ(error_line("[experiment]\nproblem = poisson1\n\n[model]\nhidden = 10, x\n"), 5u);
  EXPECT_EQ(error_line("[experiment]\nproblem = poisson1\n[model]\nfeature = nothing\n"), 4u);
  EXPECT_EQ(error_line("[experiment]\nproblem = poisson1\n[trainin]\n"), 3u);
  EXPECT_EQ(error_line("[experiment]\nproblem = poisson1\n[training]\nepochs = 3\n"), 4u);
  EXPECT_EQ(error_line("[experiment]\nproblem = poisson1\n[training]\nmax_epochs = 3\nmax_epochs = 4\n"), 5u);
  EXPECT_EQ(error_line("[experiment]\nproblem = poisson1\n[sampling]\nn_interior = 0\n"), 4u);
  EXPECT_EQ(error_line("[experiment]\nproblem = poisson1\n[model]\narchitecture = pi_arch\n"), 4u);
  EXPECT_EQ(error_line("[experiment]\nproblem = poisson1\n[model]\nfeature_expr = k: sin(y)\n"), 4u);
  EXPECT_EQ(error_line("[experiment]\nproblem = poisson_param\n[evaluation]\nmu = 1\n"), 4u);
  EXPECT_EQ(error_line("problem = poisson1\n"), 1u);
  EXPECT_EQ(error_line("[experiment]\nproblem poisson1\n"), 2u);
  EXPECT_EQ(error_line("[experiment\n"), 1u);
  EXPECT_THROW(parse("[model]\nhidden = 3\n"), ConfigError);
}

TEST(Config, WriteThenParseRoundTrips) {
  auto c = parse(kTiny);
  c.full_max_epochs = 99;
  c.feature_exprs.push_back({"k", "sin(a*x0)", {{"a", 0.1}}});
  std::ostringstream os;
  write_config(os, c);
  std::istringstream in(os.str());
  const auto back = parse_config(in);
  std::ostringstream again;
  write_config(again, back);
  EXPECT_EQ(os.str(), again.str());
  EXPECT_EQ(back.feature_exprs[0].parameters[0].second, 0.1);
}

TEST(Config, ShippedPresetsValidate) {
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(preset_directory())) {
    if (entry.path().extension() != ".ini") continue;
    EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
    ++n;
  }
  EXPECT_GE(n, 6u);
}

TEST(Config, FullSectionOverridesStopping) {
  auto c = load_config(preset_directory() / "burgers.ini");
  EXPECT_EQ(c.max_epochs, 10000u);
  c.apply_full();
  EXPECT_EQ(c.max_epochs, 200000u);
  EXPECT_EQ(c.loss_tol, 1e-4);
}

TEST(Run, WritesArtifactsAndIsReproducible) {
  const auto c = parse(kTiny);
  std::ostringstream log;
  const auto a = scratch("a"), b = scratch("b");
  const auto ra = run_experiment(c, a, {}, log);
  run_experiment(c, b, {}, log);
  for (const char* f : {"config.ini", "loss.csv", "params.json", "summary.json", "prediction_0.csv", "error_0.csv"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_EQ(ra.train.history.size(), 30u);
  ASSERT_EQ(ra.evaluations.size(), 1u);
  ASSERT_EQ(ra.evaluations[0].max_error.size(), 1u);

  // Error CSV agrees with the closed form at every node.
  const auto model = load_surrogate(a);
  std::ifstream err(a / "error_0.csv");
  std::string line;
  std::getline(err, line);
  EXPECT_EQ(line, "x0,x1,err_w");
  std::size_t rows = 0;
  double worst = 0.0;
  while (std::getline(err, line)) {
    double x[2], e;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf", &x[0], &x[1], &e), 3);
    const auto& p = find_problem("poisson1");
    EXPECT_NEAR(e, std::abs(model->predict_point(x, {})[0] - p.exact(x, {})[0]), 1e-15);
    worst = std::max(worst, e);
    ++rows;
  }
  EXPECT_EQ(rows, 121u);
  EXPECT_EQ(worst, ra.evaluations[0].max_error[0]);

  const auto summary = nlohmann::json::parse(slurp(a / "summary.json"));
  EXPECT_EQ(summary["termination"], "max_epochs");
  EXPECT_FALSE(summary.contains("wall_ms"));
}

TEST(Run, ReferenceErrorUsesTheOracle) {
  auto c = parse(R"(
[experiment]
problem = poisson_param
[model]
hidden = 5
[sampling]
n_interior = 16
n_boundary = 16
n_parameter = 2
[training]
max_epochs = 2
[evaluation]
grid = 9
reference_n = 17
mu = 0.5, 0.5
)");
  const auto dir = scratch("param");
  std::ostringstream log;
  const auto r = run_experiment(c, dir, {}, log);
  ASSERT_EQ(r.evaluations.size(), 1u);
  EXPECT_EQ(r.evaluations[0].error_fields, (std::vector<std::string>{"w"}));
  EXPECT_TRUE(fs::exists(dir / "error_0.csv"));
}

TEST(Report, TableAndErrors) {
  const auto c = parse(kTiny);
  std::ostringstream log;
  const auto a = scratch("ra");
  run_experiment(c, a, {}, log);
  const auto rep = make_report({a}, 1e9);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.rows[0].epochs_to_tol, 1u);
  EXPECT_EQ(rep.rows[0].epochs, 30u);
  EXPECT_FALSE(rep.rows[0].relation_violation.has_value());
  const auto strict = make_report({a}, 1e-300);
  EXPECT_FALSE(strict.rows[0].epochs_to_tol.has_value());
  std::ostringstream text;
  write_report_text(text, strict);
  EXPECT_NE(text.str().find("not reached"), std::string::npos);

  auto other = parse("[experiment]\nproblem = poisson2\n[training]\nmax_epochs = 1\n[sampling]\nn_interior = 9\n");
  const auto b = scratch("rb");
  run_experiment(other, b, {}, log);
  EXPECT_THROW(make_report({a, b}), std::invalid_argument);
}

TEST(Report, OcpTableAtTheOrigin) {
  auto c = parse(R"(
[experiment]
problem = ocp_poisson
[model]
hidden = 4
[sampling]
n_interior = 9
n_boundary = 8
n_parameter = 2
[training]
max_epochs = 1
[evaluation]
grid = 5
reference_n = 17
mu = 1, 0.01
)");
  std::ostringstream log;
  const auto a = scratch("ocp");
  run_experiment(c, a, {}, log);
  const auto rep = make_report({a});
  ASSERT_EQ(rep.ocp.size(), 9u);
  EXPECT_EQ(rep.rows[0].relation_violation.value(), 0.0);
  for (const auto& row : rep.ocp) {
    const double mu[] = {row.mu1, row.mu2};
    const auto sol = solve_ocp_poisson_fd(mu, 17);
    EXPECT_EQ(row.y_ref, sol.at(0, 8, 8));
    EXPECT_EQ(row.u_ref, sol.at(1, 8, 8));
  }
  std::ostringstream csv;
  write_ocp_csv(csv, rep);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "run,mu1,mu2,y,y_ref,u,u_ref");
}

TEST(Checks, AllPass) {
  for (const auto& r : run_checks(preset_directory())) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

TEST(Binary, ExitCodes) {
  const std::string bin = PINN_CLI_PATH;
  const auto dir = scratch("bin");
  fs::create_directories(dir);
  {
    std::ofstream bad(dir / "bad.ini");
    bad << "[experiment]\nproblem = no_such_problem\n";
  }
  EXPECT_EQ(WEXITSTATUS(std::system((bin + " run " + (dir / "bad.ini").string() + " 2>/dev/null").c_str())), 2);
  {
    std::ofstream bad(dir / "diverge.ini");
    bad << "[experiment]\nproblem = poisson1\n[model]\nhidden = 3\nfeature_expr = bad: log(x0 - 2)\n"
           "[training]\nmax_epochs = 5\n";
  }
  const auto out = (dir / "run").string();
  EXPECT_EQ(WEXITSTATUS(std::system((bin + " run -q " + (dir / "diverge.ini").string() + " -o " + out +
                                     " >/dev/null 2>&1").c_str())),
            3);
  EXPECT_TRUE(fs::exists(fs::path(out) / "loss.csv"));
  EXPECT_TRUE(fs::exists(fs::path(out) / "summary.json"));
  EXPECT_EQ(WEXITSTATUS(std::system((bin + " oracle poisson1 -n 9 -o " + (dir / "o.csv").string()).c_str())), 0);
  EXPECT_EQ(slurp(dir / "o.csv").substr(0, 6), "x0,x1,");
}
