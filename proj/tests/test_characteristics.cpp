#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace charstoch;
using namespace charstoch::testing;

namespace {

// Damped fixed point u <- (u + sin(x - t u)) / 2, run to 1e-14.
double fixed_point_sin(double t, double x) {
  double u = std::sin(x);
  for (int it = 0; it < 100000; ++it) {
    const double next = 0.5 * (u + std::sin(x - t * u));
    if (std::fabs(next - u) < 1e-16) return next;
    u = next;
  }
  return u;
}

ProblemSpec burgers(std::string u0, Interval box = {-6, 6}) {
  return build_problem(config_1d("u", std::move(u0), "1", 0.1, box, {box.lo / 2, box.hi / 2}, 21));
}

}  // namespace

TEST(SolveImplicit, TimeZeroReturnsInitialData) {
  const ProblemSpec spec = burgers_sin(0.1);
  EXPECT_EQ(solve_implicit(spec, 0.0, Point{0.4}), std::sin(0.4));
}

TEST(SolveImplicit, ConstantDataIsFixedPoint) {
  const ProblemSpec spec = constant_data(0.6, 0.1);
  for (double t : {0.3, 2.0, 10.0}) EXPECT_NEAR(solve_implicit(spec, t, Point{1.0}), 0.6, 1e-12);
}

TEST(SolveImplicit, MatchesFixedPointOracle) {
  const ProblemSpec spec = burgers_sin(0.1);
  EXPECT_NEAR(solve_implicit(spec, 0.5, Point{1.0}), fixed_point_sin(0.5, 1.0), 1e-10);
  for (const Point& x : spec.grid_points()) EXPECT_NEAR(solve_implicit(spec, 0.7, x), fixed_point_sin(0.7, x[0]), 1e-10);
}

TEST(SolveImplicit, ConstantAlongCharacteristics) {
  const ProblemSpec spec = burgers_sin(0.1);
  for (double t : {0.2, 0.6, 0.9})
    for (int k = 0; k <= 40; ++k) {
      const Point y{-kPi + 2 * kPi * k / 40.0};
      EXPECT_NEAR(solve_implicit(spec, t, char_forward(spec, t, y)), std::sin(y[0]), 1e-9);
    }
}

TEST(SolveImplicit, RangeMatchesInitialRange) {
  const ProblemSpec spec = burgers("0.3 + 0.5*sin(x1) - 0.2*cos(3*x1)");
  for (const Point& x : spec.grid_points()) {
    const double u = solve_implicit(spec, 0.1, x);
    EXPECT_GE(u, spec.u0_min() - 1e-12);
    EXPECT_LE(u, spec.u0_max() + 1e-12);
  }
}

TEST(GradientExact, ConstantDataIsZero) {
  EXPECT_EQ(gradient_exact(constant_data(0.5, 0.1), 0.7, Point{0.2})[0], 0.0);
}

TEST(GradientExact, TimeZeroGivesInitialGradient) {
  const ProblemSpec numeric = burgers_sin(0.1);
  EXPECT_EQ(gradient_exact(numeric, 0.0, Point{0.9})[0], numeric.grad_u0(Point{0.9})[0]);
  ProblemConfig c = numeric.config();
  c.grad_u0 = std::vector<std::string>{"cos(x1)"};
  EXPECT_EQ(gradient_exact(build_problem(c), 0.0, Point{0.9})[0], std::cos(0.9));
}

TEST(GradientExact, MatchesFiniteDifferences) {
  const ProblemSpec spec = burgers_sin(0.1);
  const double e = 1e-5;
  const double fd = (solve_implicit(spec, 0.5, Point{1.0 + e}) - solve_implicit(spec, 0.5, Point{1.0 - e})) / (2 * e);
  EXPECT_NEAR(gradient_exact(spec, 0.5, Point{1.0})[0] / fd, 1.0, 1e-4);
}

TEST(GradientExact, NearBlowupThrows) {
  const ProblemSpec spec = burgers_sin(0.1);
  // At t = 1 the denominator 1 + t cos(y) vanishes at y = pi (x = pi).
  EXPECT_THROW(gradient_exact(spec, 1.0, Point{kPi}), NearBlowup);
}

TEST(CharJacobian, IdentityAtTimeZero) {
  const ProblemSpec spec = burgers("sin(x1)");
  EXPECT_DOUBLE_EQ(char_jacobian(spec, 0.0, Point{0.3})(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(char_det(spec, 0.0, Point{0.3}), 1.0);
}

TEST(BlowupTime, SinusoidalData) {
  const BlowupReport r = blow_up_time(burgers_sin(0.1));
  ASSERT_TRUE(r.finite);
  EXPECT_NEAR(r.t_star, 1.0, 1e-3);
  EXPECT_NEAR(std::fabs(r.y_star[0]), kPi, 1e-3);
  EXPECT_NEAR(r.min_functional, -1.0, 1e-3);
}

TEST(BlowupTime, GaussianDataMatchesDenseOracle) {
  // Independent oracle: dense grid of -1/u0'(y) restricted to u0' < 0.
  double best = 1e300;
  for (int k = 0; k <= 2000000; ++k) {
    const double y = 3.0 * k / 2000000.0;
    const double d = -2.0 * y * std::exp(-y * y);
    if (d < 0) best = std::min(best, -1.0 / d);
  }
  const BlowupReport r = blow_up_time(burgers("exp(-x1^2)"));
  ASSERT_TRUE(r.finite);
  EXPECT_NEAR(r.t_star, best, 1e-6);
  EXPECT_NEAR(r.t_star, std::sqrt(std::exp(1.0) / 2.0), 1e-3);
}

TEST(BlowupTime, MonotoneDataNeverBlowsUp) {
  const BlowupReport r = blow_up_time(burgers("tanh(x1)"));
  EXPECT_FALSE(r.finite);
  EXPECT_TRUE(std::isinf(r.t_star));
  EXPECT_GE(r.min_functional, 0.0);
}

TEST(BlowupTime, InvariantUnderShiftOfData) {
  const double a = blow_up_time(burgers("exp(-x1^2)")).t_star;
  const double b = blow_up_time(burgers("exp(-x1^2) + 0.8")).t_star;
  EXPECT_NEAR(a, b, 1e-6);
}

TEST(BlowupTime, TimeDependentVelocity) {
  // a = 2 t u: A = t^2 u, blow-up where t^2 min(cos) = -1, i.e. t* = 1.
  const ProblemSpec spec = build_problem(config_1d("2*t*u", "sin(x1)", "1", 0.1, {-2 * kPi, 2 * kPi}, {-kPi, kPi}, 11));
  const BlowupReport r = blow_up_time(spec);
  ASSERT_TRUE(r.finite);
  EXPECT_EQ(r.method, "lambda_grid");
  EXPECT_NEAR(r.t_star, 1.0, 1e-3);
  EXPECT_NEAR(r.min_functional, -1.0, 1e-3);
}

TEST(CharDet, MinimumDecreasesTowardBlowup) {
  const ProblemSpec spec = burgers("exp(-x1^2)");
  const double t_star = blow_up_time(spec).t_star;
  double prev = 2.0;
  for (double f : {0.0, 0.25, 0.5, 0.75, 0.9, 0.99}) {
    double m = 1e300;
    for (int k = 0; k <= 4000; ++k) m = std::min(m, char_det(spec, f * t_star, Point{-6.0 + 12.0 * k / 4000.0}));
    EXPECT_LT(m, prev);
    EXPECT_GT(m, 0.0);
    prev = m;
  }
}

TEST(InvertCharMap, TimeZeroAndConstantTransport) {
  const ProblemSpec spec = constant_data(0.5, 0.1);
  EXPECT_EQ(invert_char_map(spec, 0.0, Point{0.3})[0], 0.3);
  EXPECT_NEAR(invert_char_map(spec, 2.0, Point{0.3})[0], 0.3 - 2.0 * 0.5, 1e-12);
}

TEST(InvertCharMap, RoundTrip) {
  const ProblemSpec spec = burgers_sin(0.1);
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> uy(-kPi, kPi);
  for (int k = 0; k < 100; ++k) {
    const Point y{uy(gen)};
    EXPECT_NEAR(invert_char_map(spec, 0.5, char_forward(spec, 0.5, y))[0], y[0], 1e-9);
  }
}

TEST(InvertCharMap, RoundTripTwoDimensions) {
  ProblemConfig c;
  c.n = 2;
  c.a = {"u", "u"};
  c.u0 = "exp(-x1^2-x2^2)";
  c.rho0 = "1";
  c.box = {{-3, 3}, {-3, 3}};
  c.space_grid = {5, 5};
  c.time_points = {0.0};
  const ProblemSpec spec = build_problem(c);
  for (const Point& y : spec.grid_points()) {
    const Point back = invert_char_map(spec, 0.3, char_forward(spec, 0.3, y));
    EXPECT_NEAR(back[0], y[0], 1e-9);
    EXPECT_NEAR(back[1], y[1], 1e-9);
  }
}

TEST(RhoBar, TimeZeroAndRigidTransport) {
  const ProblemSpec spec = build_problem(config_1d("u", "0.5", "exp(-x1^2)", 0.1, {-10, 10}, {-2, 2}, 5));
  EXPECT_EQ(eval_rho_bar(spec, 0.0, Point{0.4}), std::exp(-0.16));
  EXPECT_NEAR(eval_rho_bar(spec, 1.2, Point{0.4}), std::exp(-(0.4 - 0.6) * (0.4 - 0.6)), 1e-12);
}

TEST(RhoBar, MatchesSmallSigmaQuadrature) {
  const ProblemSpec spec = burgers_sin(0.05);
  const KernelQuadrature kq(spec, 0.5);
  for (const Point& x : spec.grid_points()) {
    const double bar = eval_rho_bar(spec, 0.5, x);
    EXPECT_NEAR(kq.rho(x) / bar, 1.0, 5e-2);
  }
}

TEST(ABar, ConstantAndInitial) {
  EXPECT_NEAR(eval_a_bar(constant_data(0.25, 0.1), 0.8, Point{1.0})[0], 0.25, 1e-12);
  const ProblemSpec spec = build_problem(config_1d("u^2 + 1", "sin(x1)", "1", 0.1, {-7, 7}, {-3, 3}, 5));
  EXPECT_EQ(eval_a_bar(spec, 0.0, Point{0.5})[0], std::sin(0.5) * std::sin(0.5) + 1.0);
}

TEST(ABar, ConstantAlongCharacteristicLines) {
  const ProblemSpec spec = burgers_sin(0.1);
  for (int k = 0; k < 10; ++k) {
    const double x0 = -2.5 + 0.5 * k;
    const double a0 = eval_a_bar(spec, 0.1, Point{x0})[0];
    for (double t : {0.2, 0.4, 0.6, 0.8}) {
      const double x = x0 + a0 * (t - 0.1);
      EXPECT_NEAR(eval_a_bar(spec, t, Point{x})[0], a0, 1e-8);
    }
  }
}

TEST(CharFieldGrid, TimeZeroEqualsInitialData) {
  const ProblemSpec spec = burgers_sin(0.1);
  const FieldGrid g = char_field_grid(spec, 0.0, FieldKind::U);
  for (std::size_t p = 0; p < g.point_count(); ++p) EXPECT_EQ(g.value(p), std::sin(g.coords(p)[0]));
}
