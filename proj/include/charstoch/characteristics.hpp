#pragma once

// Classical solution by characteristics. Before blow-up the solution is
// constant along x = y + A(t,u0(y)), so u solves u = u0(x - A(t,u)).

#include <charstoch/errors.hpp>
#include <charstoch/parallel.hpp>
#include <charstoch/problem.hpp>
#include <charstoch/representation.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace charstoch {

/// Lambda functional sum_i B_i(t,u0(y)) d_i u0(y); det C(t,y) = 1 + this.
inline double lambda_functional(const ProblemSpec& spec, double t, std::span<const double> y) {
  const double u = spec.u0(y);
  const Point g = spec.grad_u0(y);
  double s = 0.0;
  for (int i = 0; i < spec.n(); ++i) s += spec.flow_u(i, t, u) * g[static_cast<std::size_t>(i)];
  return s;
}

/// Jacobian C_ij = delta_ij + B_i(t,u0(y)) d_j u0(y) of y -> y + A(t,u0(y)).
inline Eigen::MatrixXd char_jacobian(const ProblemSpec& spec, double t, std::span<const double> y) {
  const auto n = static_cast<Eigen::Index>(spec.n());
  const double u = spec.u0(y);
  const Point g = spec.grad_u0(y);
  Eigen::MatrixXd C = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double b = spec.flow_u(static_cast<int>(i), t, u);
    for (Eigen::Index j = 0; j < n; ++j) C(i, j) += b * g[static_cast<std::size_t>(j)];
  }
  return C;
}

inline double char_det(const ProblemSpec& spec, double t, std::span<const double> y) {
  return 1.0 + lambda_functional(spec, t, y);
}

/// Forward characteristic map y -> y + A(t,u0(y)).
inline Point char_forward(const ProblemSpec& spec, double t, std::span<const double> y) {
  const double u = spec.u0(y);
  Point x(y.begin(), y.end());
  for (int i = 0; i < spec.n(); ++i) x[static_cast<std::size_t>(i)] += spec.flow(i, t, u);
  return x;
}

/// Solves u = u0(x - A(t,u)) by Newton safeguarded with bisection on the
/// inflated range of u0.
inline double solve_implicit(const ProblemSpec& spec, double t, std::span<const double> x) {
  if (t < 0.0) throw ValidationError("t must be >= 0");
  if (t == 0.0) return spec.u0(x);
  const std::size_t n = x.size();
  Point y(n);
  const auto foot = [&](double u) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - spec.flow(static_cast<int>(i), t, u);
  };
  const auto F = [&](double u) {
    foot(u);
    return u - spec.u0(y);
  };
  const auto dF = [&](double u) {
    foot(u);
    const Point g = spec.grad_u0(y);
    double s = 1.0;
    for (std::size_t i = 0; i < n; ++i) s += spec.flow_u(static_cast<int>(i), t, u) * g[i];
    return s;
  };

  const Interval br = spec.u0_bracket();
  double lo = br.lo, hi = br.hi;
  double flo = F(lo), fhi = F(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0))
    throw OutOfBracket("implicit equation has no sign change on the range of u0");
  if (flo > 0.0) std::swap(lo, hi);  // keep F(lo) < 0

  const double tol = spec.tol().newton_tol;
  double u = std::clamp(spec.u0(x), std::min(lo, hi), std::max(lo, hi));
  double dx_old = std::fabs(hi - lo), dx = dx_old;
  double f = F(u);
  for (int it = 0; it < spec.tol().max_iter; ++it) {
    if (std::fabs(f) <= tol) return u;
    const double df = dF(u);
    const bool newton_ok = df != 0.0 && ((u - hi) * df - f) * ((u - lo) * df - f) < 0.0 &&
                           std::fabs(2.0 * f) <= std::fabs(dx_old * df);
    dx_old = dx;
    if (newton_ok) {
      dx = f / df;
      u -= dx;
    } else {
      dx = 0.5 * (hi - lo);
      u = lo + dx;
    }
    f = F(u);
    if (f < 0.0)
      lo = u;
    else
      hi = u;
    if (lo == hi || std::fabs(hi - lo) <= std::numeric_limits<double>::epsilon() * std::fabs(u)) {
      if (std::fabs(f) <= tol) return u;
      break;
    }
  }
  if (std::fabs(f) <= tol) return u;
  throw NoConvergence("implicit relation did not converge (residual " + std::to_string(std::fabs(f)) +
                      "); t may be too close to blow-up");
}

/// grad_x u = grad u0(y) / (1 + sum_i B_i(t,u) d_i u0(y)), y = x - A(t,u).
inline Point gradient_exact(const ProblemSpec& spec, double t, std::span<const double> x) {
  const double u = solve_implicit(spec, t, x);
  Point y(x.begin(), x.end());
  for (int i = 0; i < spec.n(); ++i) y[static_cast<std::size_t>(i)] -= spec.flow(i, t, u);
  Point g = spec.grad_u0(y);
  double denom = 1.0;
  for (int i = 0; i < spec.n(); ++i) denom += spec.flow_u(i, t, u) * g[static_cast<std::size_t>(i)];
  if (denom < spec.tol().near_blowup_margin)
    throw NearBlowup("gradient denominator " + std::to_string(denom) + " below margin");
  for (auto& v : g) v /= denom;
  return g;
}

/// Foot point y0 of the characteristic through (t,x):
/// y0 + A(t,u0(y0)) - x = 0.
inline Point invert_char_map(const ProblemSpec& spec, double t, std::span<const double> x) {
  if (t < 0.0) throw ValidationError("t must be >= 0");
  Point y(x.begin(), x.end());
  if (t == 0.0) return y;
  const std::size_t n = x.size();
  const double tol = spec.tol().newton_tol;
  const auto residual = [&](const Point& yy) {
    Eigen::VectorXd G(static_cast<Eigen::Index>(n));
    const Point fx = char_forward(spec, t, yy);
    for (std::size_t i = 0; i < n; ++i) G(static_cast<Eigen::Index>(i)) = fx[i] - x[i];
    return G;
  };

  Eigen::VectorXd G = residual(y);
  for (int it = 0; it < spec.tol().max_iter && G.norm() > tol; ++it) {
    const Eigen::MatrixXd C = char_jacobian(spec, t, y);
    const auto lu = C.partialPivLu();
    if (std::fabs(lu.determinant()) < 1e-10)
      break;  // fall through to damped iteration
    const Eigen::VectorXd step = lu.solve(G);
    double lambda = 1.0;
    Point trial(n);
    Eigen::VectorXd Gt;
    for (int k = 0; k < 40; ++k) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = y[i] - lambda * step(static_cast<Eigen::Index>(i));
      Gt = residual(trial);
      if (Gt.norm() < G.norm() || Gt.norm() <= tol) break;
      lambda *= 0.5;
    }
    if (!(Gt.norm() < G.norm()) && Gt.norm() > tol) break;
    y = trial;
    G = Gt;
  }
  if (G.norm() > tol) {
    // Damped fixed-point iteration y <- (y + x - A(t,u0(y))) / 2.
    for (int it = 0; it < 50 * spec.tol().max_iter && G.norm() > tol; ++it) {
      for (std::size_t i = 0; i < n; ++i) y[i] -= 0.5 * G(static_cast<Eigen::Index>(i));
      G = residual(y);
    }
  }
  if (G.norm() > tol)
    throw NoConvergence("characteristic map inversion did not converge (residual " +
                        std::to_string(G.norm()) + ")");
  if (char_det(spec, t, y) < 1e-10) throw SingularJacobian("det C vanishes at the foot point");
  return y;
}

/// sigma -> 0 density limit rho0(y0) / det C(t,y0).
inline double eval_rho_bar(const ProblemSpec& spec, double t, std::span<const double> x) {
  if (t == 0.0) return spec.rho0(x);
  const Point y0 = invert_char_map(spec, t, x);
  const double det = char_det(spec, t, y0);
  if (det < 1e-10) throw SingularJacobian("det C vanishes at the foot point");
  return spec.rho0(y0) / det;
}

/// a(t, u(t,x)) for the classical solution u.
inline Point eval_a_bar(const ProblemSpec& spec, double t, std::span<const double> x) {
  const double u = solve_implicit(spec, t, x);
  Point a(static_cast<std::size_t>(spec.n()));
  for (int i = 0; i < spec.n(); ++i) a[static_cast<std::size_t>(i)] = spec.a(i, t, u);
  return a;
}

// Blow-up time ---------------------------------------------------------------

struct BlowupReport {
  bool finite = false;
  double t_star = std::numeric_limits<double>::infinity();
  Point y_star;
  /// Lambda functional at (t_star, y_star) when finite (equals -1 up to
  /// blowup_tol); otherwise the grid minimum of its time-derivative
  /// sum_i (a_i)_u d_i u0, which is >= 0.
  double min_functional = 0.0;
  std::string method;
};

namespace detail {

/// Uniform sample of the box for the blow-up search.
struct SearchGrid {
  std::vector<Point> points;
  std::vector<double> spacing;
};

inline SearchGrid search_grid(const ProblemSpec& spec) {
  const std::size_t n = static_cast<std::size_t>(spec.n());
  const auto cap_per_axis =
      static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(spec.tol().blowup_grid_cap), 1.0 / n) + 1e-9));
  const std::size_t m = std::max<std::size_t>(2, std::min<std::size_t>(spec.tol().blowup_grid, cap_per_axis));
  SearchGrid g;
  for (const auto& b : spec.box()) g.spacing.push_back(b.width() / static_cast<double>(m - 1));
  std::size_t total = 1;
  for (std::size_t d = 0; d < n; ++d) total *= m;
  std::vector<std::size_t> idx(n, 0);
  g.points.reserve(total);
  for (std::size_t k = 0; k < total; ++k) {
    Point p(n);
    for (std::size_t d = 0; d < n; ++d) p[d] = spec.box()[d].lo + g.spacing[d] * static_cast<double>(idx[d]);
    g.points.push_back(std::move(p));
    for (std::size_t d = n; d-- > 0;) {
      if (++idx[d] < m) break;
      idx[d] = 0;
    }
  }
  return g;
}

/// Grid minimum of f with ties broken by the lowest index.
template <class F>
std::pair<std::size_t, double> grid_argmin(const SearchGrid& g, F&& f) {
  std::vector<double> v(g.points.size());
  parallel_for(v.size(), [&](std::size_t k) { v[k] = f(std::span<const double>(g.points[k])); });
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] < v[best]) best = k;
  return {best, v[best]};
}

/// Coordinate-wise golden-section refinement of a minimum within one
/// grid cell of `y` on each axis, clipped to the box.
template <class F>
double golden_refine(const ProblemSpec& spec, Point& y, const std::vector<double>& spacing, F&& f) {
  constexpr double kInvPhi = 0.6180339887498949;
  double best = f(std::span<const double>(y));
  for (int sweep = 0; sweep < (y.size() == 1 ? 1 : 6); ++sweep) {
    for (std::size_t d = 0; d < y.size(); ++d) {
      double a = std::max(spec.box()[d].lo, y[d] - spacing[d]);
      double b = std::min(spec.box()[d].hi, y[d] + spacing[d]);
      Point p = y;
      const auto g = [&](double s) {
        p[d] = s;
        return f(std::span<const double>(p));
      };
      double c = b - kInvPhi * (b - a), e = a + kInvPhi * (b - a);
      double fc = g(c), fe = g(e);
      for (int it = 0; it < 200 && (b - a) > 1e-13 * std::max(1.0, std::fabs(a)); ++it) {
        if (fc < fe) {
          b = e;
          e = c;
          fe = fc;
          c = b - kInvPhi * (b - a);
          fc = g(c);
        } else {
          a = c;
          c = e;
          fc = fe;
          e = a + kInvPhi * (b - a);
          fe = g(e);
        }
      }
      const double s = fc < fe ? c : e;
      const double fs = std::min(fc, fe);
      if (fs < best) {
        best = fs;
        y[d] = s;
      }
    }
  }
  return best;
}

}  // namespace detail

/// Supremum of the connected part of Lambda = {t : inf_y Phi(t,y) > -1}
/// containing 0. Time-independent velocities use the closed form
/// t* = -1 / min_y sum_i (a_i)_u(u0(y)) d_i u0(y).
inline BlowupReport blow_up_time(const ProblemSpec& spec) {
  const detail::SearchGrid grid = detail::search_grid(spec);
  BlowupReport r;

  if (!spec.time_dependent()) {
    r.method = "conway";
    const auto rate = [&](std::span<const double> y) {
      const double u = spec.u0(y);
      const Point g = spec.grad_u0(y);
      double s = 0.0;
      for (int i = 0; i < spec.n(); ++i) s += spec.a_u(i, 0.0, u) * g[static_cast<std::size_t>(i)];
      return s;
    };
    auto [k, gmin] = detail::grid_argmin(grid, rate);
    Point y = grid.points[k];
    if (gmin < 0.0) gmin = std::min(gmin, detail::golden_refine(spec, y, grid.spacing, rate));
    r.y_star = y;
    if (!(gmin < 0.0)) {
      r.min_functional = gmin;
      return r;
    }
    r.finite = true;
    r.t_star = -1.0 / gmin;
    r.min_functional = lambda_functional(spec, r.t_star, y);
    return r;
  }

  r.method = "lambda_grid";
  const auto inf_at = [&](double t) {
    return detail::grid_argmin(grid, [&](std::span<const double> y) { return lambda_functional(spec, t, y); });
  };
  const double t_max = spec.tol().blowup_t_max;
  constexpr int kScan = 200;
  double t_lo = 0.0, t_hi = -1.0;
  for (int s = 1; s <= kScan; ++s) {
    const double t = t_max * s / kScan;
    if (inf_at(t).second <= -1.0) {
      t_hi = t;
      break;
    }
    t_lo = t;
  }
  if (t_hi < 0.0) {
    const auto [k, v] = inf_at(t_max);
    r.y_star = grid.points[k];
    r.min_functional = v;
    return r;
  }
  while (t_hi - t_lo > 1e-3 * spec.tol().blowup_tol) {
    const double mid = 0.5 * (t_lo + t_hi);
    if (inf_at(mid).second <= -1.0)
      t_hi = mid;
    else
      t_lo = mid;
  }
  const auto [k, v] = inf_at(t_hi);
  Point y = grid.points[k];
  detail::golden_refine(spec, y, grid.spacing,
                        [&](std::span<const double> p) { return lambda_functional(spec, t_hi, p); });
  // Re-bisect on the refined point so that Phi(t*, y*) = -1.
  double a = 0.0, b = t_hi;
  while (lambda_functional(spec, b, y) > -1.0 && b < t_max) b = std::min(t_max, 2.0 * b);
  if (lambda_functional(spec, b, y) <= -1.0) {
    for (int it = 0; it < 200 && b - a > 1e-14 * b; ++it) {
      const double mid = 0.5 * (a + b);
      if (lambda_functional(spec, mid, y) <= -1.0)
        b = mid;
      else
        a = mid;
    }
    t_hi = std::min(t_hi, b);
  }
  r.finite = true;
  r.t_star = t_hi;
  r.y_star = y;
  r.min_functional = lambda_functional(spec, t_hi, y);
  return r;
}

/// Classical rho_bar, u or a_bar on the space grid; points where the
/// solvers fail are masked invalid.
inline FieldGrid char_field_grid(const ProblemSpec& spec, double t, FieldKind which) {
  const std::size_t nc = which == FieldKind::A ? static_cast<std::size_t>(spec.n()) : 1;
  FieldGrid g = make_field_grid(spec, t, nc);
  parallel_for(g.point_count(), [&](std::size_t p) {
    const Point x = g.coords(p);
    try {
      if (which == FieldKind::Rho) {
        g.values[p] = eval_rho_bar(spec, t, x);
      } else if (which == FieldKind::U) {
        g.values[p] = solve_implicit(spec, t, x);
      } else {
        const Point a = eval_a_bar(spec, t, x);
        for (std::size_t i = 0; i < nc; ++i) g.values[p * nc + i] = a[i];
      }
      g.valid[p] = 1;
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::Numerical) throw;
      g.valid[p] = 0;
    }
  });
  return g;
}

}  // namespace charstoch
