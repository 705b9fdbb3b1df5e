#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace charstoch;
using namespace charstoch::testing;

namespace {

const char* kBurgersConfig = R"json({
  "n": 1, "a": ["u"], "u0": "sin(x1)", "rho0": "1", "sigma": 0.1,
  "box": [[-6.28, 6.28]], "space_grid": [41], "time_points": [0, 0.5], "rng_seed": 7
})json";

std::string with_field(const std::string& extra) {
  std::string s = kBurgersConfig;
  s.insert(s.rfind('}'), ", " + extra);
  return s;
}

}  // namespace

TEST(LoadProblem, BurgersConfigIsValid) {
  const ProblemSpec p = load_problem(kBurgersConfig);
  EXPECT_EQ(p.n(), 1);
  EXPECT_EQ(p.sigma(), 0.1);
  EXPECT_EQ(p.rng_seed(), 7u);
  EXPECT_EQ(p.tol().quad_tol_time, 1e-10);
  EXPECT_EQ(p.tol().kernel_cutoff, 8.0);
  EXPECT_EQ(p.tol().newton_tol, 1e-12);
  EXPECT_EQ(p.tol().max_iter, 100);
  EXPECT_FALSE(p.time_dependent());
  EXPECT_NEAR(p.u0_min(), -1.0, 1e-6);
  EXPECT_NEAR(p.u0_max(), 1.0, 1e-6);
  const Interval br = p.u0_bracket();
  EXPECT_NEAR(br.lo, p.u0_min() - 0.01 * (p.u0_max() - p.u0_min()), 1e-15);
}

TEST(LoadProblem, NegativeDensityRejected) {
  std::string s = kBurgersConfig;
  s.replace(s.find("\"rho0\": \"1\""), 11, "\"rho0\": \"-1\"");
  EXPECT_THROW(load_problem(s), ValidationError);
}

TEST(LoadProblem, AnalyticAntiderivativeAccepted) {
  const ProblemSpec p = load_problem(with_field(R"("A": ["t*u"])"));
  EXPECT_EQ(p.flow(0, 2.0, 3.0), 6.0);
  EXPECT_THROW(load_problem(with_field(R"("A": ["t*u^2"])")), ValidationError);
}

TEST(LoadProblem, AnalyticDerivativesChecked) {
  EXPECT_NO_THROW(load_problem(with_field(R"j("a_u": ["1"], "grad_u0": ["cos(x1)"])j")));
  EXPECT_THROW(load_problem(with_field(R"("a_u": ["2"])")), ValidationError);
  EXPECT_THROW(load_problem(with_field(R"j("grad_u0": ["sin(x1)"])j")), ValidationError);
}

TEST(LoadProblem, SchemaErrors) {
  EXPECT_THROW(load_problem("{"), SchemaError);
  EXPECT_THROW(load_problem("[]"), SchemaError);
  EXPECT_THROW(load_problem(with_field(R"("colour": "red")")), SchemaError);
  EXPECT_THROW(load_problem(R"({"n": 1})"), SchemaError);
  std::string s = kBurgersConfig;
  s.replace(s.find("\"sigma\": 0.1"), 12, "\"sigma\": \"x\"");
  EXPECT_THROW(load_problem(s), SchemaError);
  EXPECT_THROW(load_problem(with_field(R"("tolerances": {"bogus": 1})")), SchemaError);
}

TEST(LoadProblem, InvariantViolations) {
  ProblemConfig c = parse_config(kBurgersConfig);
  auto bad = c;
  bad.box = {{1.0, 1.0}};
  EXPECT_THROW(build_problem(bad), ValidationError);
  bad = c;
  bad.space_grid = {1};
  EXPECT_THROW(build_problem(bad), ValidationError);
  bad = c;
  bad.time_points = {0.5, 0.5};
  EXPECT_THROW(build_problem(bad), ValidationError);
  bad = c;
  bad.time_points = {-1.0};
  EXPECT_THROW(build_problem(bad), ValidationError);
  bad = c;
  bad.a = {"u", "u"};
  EXPECT_THROW(build_problem(bad), ValidationError);
  bad = c;
  bad.a = {"u*y1"};
  EXPECT_THROW(build_problem(bad), ValidationError);
  bad = c;
  bad.sigma = -0.1;
  EXPECT_THROW(build_problem(bad), ValidationError);
  bad = c;
  bad.u0 = "log(x1)";  // not evaluable on the box
  EXPECT_THROW(build_problem(bad), ValidationError);
}

TEST(LoadProblem, ToleranceOverrides) {
  const ProblemSpec p = load_problem(with_field(R"("tolerances": {"kernel_cutoff": 6, "max_iter": 50})"));
  EXPECT_EQ(p.tol().kernel_cutoff, 6.0);
  EXPECT_EQ(p.tol().max_iter, 50);
}

TEST(LoadProblem, ConfigJsonRoundTrip) {
  const ProblemConfig c = parse_config(with_field(R"("grid_box": [[-3, 3]], "A": ["t*u"])"));
  const ProblemConfig again = parse_config(config_to_json(c).dump());
  EXPECT_EQ(config_to_json(c), config_to_json(again));
}

TEST(FlowDisplacement, ClosedForms) {
  const ProblemSpec burgers = burgers_sin(0.1);
  EXPECT_EQ(flow_displacement(burgers, 2.0, 3.0), Point{6.0});

  auto c = config_1d("t*u", "sin(x1)", "1", 0.1, {-1, 1}, {-1, 1}, 5);
  const ProblemSpec tu = build_problem(c);
  EXPECT_TRUE(tu.time_dependent());
  EXPECT_NEAR(flow_displacement(tu, 2.0, 1.0)[0], 2.0, 1e-12);

  c.a = {"sin(t)"};
  const ProblemSpec st = build_problem(c);
  // numeric panel quadrature vs 1 - cos(pi) = 2
  EXPECT_NEAR(flow_displacement(st, kPi, 0.3)[0], 2.0, 1e-10);
  EXPECT_THROW(flow_displacement(st, -1.0, 0.0), ValidationError);
}

TEST(FlowDisplacement, ZeroAtTimeZero) {
  auto c = config_1d("sin(t)+u^2", "sin(x1)", "1", 0.1, {-1, 1}, {-1, 1}, 5);
  const ProblemSpec p = build_problem(c);
  for (double u : {-3.0, 0.0, 0.7, 1e6}) EXPECT_EQ(flow_displacement(p, 0.0, u)[0], 0.0);
}

TEST(FlowDisplacement, AdditiveForTimeIndependentVelocity) {
  // Force the quadrature path: a(t,u) = u^2 + 0*t references t.
  auto c = config_1d("u^2 + 0*t", "sin(x1)", "1", 0.1, {-1, 1}, {-1, 1}, 5);
  const ProblemSpec p = build_problem(c);
  ASSERT_TRUE(p.time_dependent());
  for (double u : {-1.3, 0.2, 2.0})
    for (auto [t1, t2] : {std::pair{0.3, 0.9}, std::pair{1.7, 0.05}})
      EXPECT_NEAR(p.flow(0, t1 + t2, u), p.flow(0, t1, u) + p.flow(0, t2, u), 1e-10);
}

TEST(FlowDisplacement, AnalyticMatchesNumericOnValidationGrid) {
  auto c = config_1d("cos(t)*u + t^2", "sin(x1)", "1", 0.1, {-1, 1}, {-1, 1}, 5);
  const ProblemSpec numeric = build_problem(c);
  c.A = std::vector<std::string>{"sin(t)*u + t^3/3"};
  const ProblemSpec analytic = build_problem(c);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) {
      const double t = 2.0 * i / 19.0, u = -1.0 + 2.0 * j / 19.0;
      EXPECT_NEAR(numeric.flow(0, t, u), analytic.flow(0, t, u), 1e-9);
      EXPECT_NEAR(numeric.flow_u(0, t, u), std::sin(t), 1e-8);
    }
}
