#pragma once

#include <charstoch/errors.hpp>
#include <charstoch/expr.hpp>
#include <charstoch/quadrature.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace charstoch {

using Point = std::vector<double>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const noexcept { return hi - lo; }
};

/// Numerical knobs. Every field has a default and may be overridden in
/// the config's `tolerances` object.
struct Tolerances {
  double quad_tol_time = 1e-10;
  double kernel_cutoff = 8.0;
  double newton_tol = 1e-12;
  int max_iter = 100;
  double blowup_tol = 1e-3;
  double near_blowup_margin = 1e-6;
  double denom_floor = 1e-250;
  int panel_order = 8;
  double panel_width_factor = 1.0;
  int min_panels = 32;
  int blowup_grid = 10000;
  int blowup_grid_cap = 1000000;
  double blowup_t_max = 100.0;
};

/// Raw, unvalidated problem description (the JSON config in struct form).
struct ProblemConfig {
  int n = 1;
  std::vector<std::string> a;
  std::optional<std::vector<std::string>> a_u;
  std::optional<std::vector<std::string>> A;
  std::string u0;
  std::string rho0;
  std::optional<std::vector<std::string>> grad_u0;
  double sigma = 0.0;
  std::vector<Interval> box;
  std::optional<std::vector<Interval>> grid_box;
  std::vector<int> space_grid;
  std::vector<double> time_points;
  std::uint64_t rng_seed = 0;
  Tolerances tol;
};

namespace detail {

inline std::vector<std::string> space_vars(int n) {
  std::vector<std::string> v;
  for (int i = 1; i <= n; ++i) v.push_back("x" + std::to_string(i));
  return v;
}

/// Central-difference step h = cbrt(eps) * max(1, |arg|).
inline double diff_step(double arg) {
  static const double base = std::cbrt(std::numeric_limits<double>::epsilon());
  return base * std::max(1.0, std::fabs(arg));
}

inline bool close_rel(double a, double b, double rel) {
  return std::fabs(a - b) <= rel * std::max(1.0, std::max(std::fabs(a), std::fabs(b)));
}

}  // namespace detail

/// Velocity components a_i(t,u) with optional analytic u-derivatives and
/// time antiderivatives.
struct VelocityField {
  std::vector<Expr> a;
  std::vector<Expr> a_u;  // empty when not supplied
  std::vector<Expr> A;    // empty when not supplied
  bool time_dependent = false;
};

struct InitialData {
  Expr u0;
  Expr rho0;
  std::vector<Expr> grad_u0;  // empty when not supplied
};

/// Validated, immutable problem. All evaluation members are pure.
class ProblemSpec {
public:
  int n() const noexcept { return n_; }
  double sigma() const noexcept { return sigma_; }
  const Tolerances& tol() const noexcept { return tol_; }
  const std::vector<Interval>& box() const noexcept { return box_; }
  const std::vector<Interval>& grid_box() const noexcept { return grid_box_; }
  const std::vector<int>& space_grid() const noexcept { return space_grid_; }
  const std::vector<double>& time_points() const noexcept { return time_points_; }
  std::uint64_t rng_seed() const noexcept { return rng_seed_; }
  const VelocityField& velocity() const noexcept { return vel_; }
  const InitialData& init() const noexcept { return init_; }
  const ProblemConfig& config() const noexcept { return cfg_; }
  bool time_dependent() const noexcept { return vel_.time_dependent; }

  /// Copy with a different diffusion coefficient.
  ProblemSpec with_sigma(double s) const {
    ProblemSpec p = *this;
    p.sigma_ = s;
    p.cfg_.sigma = s;
    return p;
  }
  ProblemSpec with_seed(std::uint64_t seed) const {
    ProblemSpec p = *this;
    p.rng_seed_ = seed;
    p.cfg_.rng_seed = seed;
    return p;
  }

  double box_volume() const noexcept {
    double v = 1.0;
    for (const auto& b : box_) v *= b.width();
    return v;
  }

  // Velocity and its derivatives ------------------------------------------

  double a(int i, double t, double u) const { return vel_.a[static_cast<std::size_t>(i)]({t, u}); }

  double a_u(int i, double t, double u) const {
    if (!vel_.a_u.empty()) return vel_.a_u[static_cast<std::size_t>(i)]({t, u});
    const double h = detail::diff_step(u);
    return (a(i, t, u + h) - a(i, t, u - h)) / (2.0 * h);
  }

  double a_t(int i, double t, double u) const {
    if (!vel_.a[static_cast<std::size_t>(i)].uses(0)) return 0.0;
    const double h = detail::diff_step(t);
    if (t - h < 0.0) return (-3.0 * a(i, t, u) + 4.0 * a(i, t + h, u) - a(i, t + 2 * h, u)) / (2.0 * h);
    return (a(i, t + h, u) - a(i, t - h, u)) / (2.0 * h);
  }

  /// Component i of A(t,u) = int_0^t a(tau,u) dtau.
  double flow(int i, double t, double u) const {
    if (t == 0.0) return 0.0;
    const auto ii = static_cast<std::size_t>(i);
    if (!vel_.A.empty()) return vel_.A[ii]({t, u}) - vel_.A[ii]({0.0, u});
    if (!vel_.a[ii].uses(0)) return t * a(i, 0.0, u);
    return integrate_adaptive([&](double tau) { return a(i, tau, u); }, 0.0, t, tol_.quad_tol_time);
  }

  /// Component i of B(t,u) = int_0^t (d a_i / d u)(tau,u) dtau.
  double flow_u(int i, double t, double u) const {
    if (t == 0.0) return 0.0;
    const auto ii = static_cast<std::size_t>(i);
    const bool t_free = !vel_.a[ii].uses(0) && (vel_.a_u.empty() || !vel_.a_u[ii].uses(0));
    if (t_free) return t * a_u(i, 0.0, u);
    if (!vel_.A.empty()) {
      const double h = detail::diff_step(u);
      return (flow(i, t, u + h) - flow(i, t, u - h)) / (2.0 * h);
    }
    return integrate_adaptive([&](double tau) { return a_u(i, tau, u); }, 0.0, t, tol_.quad_tol_time);
  }

  // Initial data -----------------------------------------------------------

  double u0(std::span<const double> x) const { return init_.u0(x); }
  double rho0(std::span<const double> x) const { return init_.rho0(x); }

  Point grad_u0(std::span<const double> x) const {
    Point g(static_cast<std::size_t>(n_));
    if (!init_.grad_u0.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = init_.grad_u0[i](x);
      return g;
    }
    Point xp(x.begin(), x.end());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double h = detail::diff_step(x[i]);
      xp[i] = x[i] + h;
      const double fp = u0(xp);
      xp[i] = x[i] - h;
      const double fm = u0(xp);
      xp[i] = x[i];
      g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
  }

  /// Sampled extrema of u0 over the truncation box.
  double u0_min() const noexcept { return u0_min_; }
  double u0_max() const noexcept { return u0_max_; }
  /// Range inflated by 1% of its span; brackets every value of the
  /// classical solution before blow-up.
  Interval u0_bracket() const noexcept {
    const double span = u0_max_ - u0_min_;
    const double pad = span > 0 ? 0.01 * span : 0.01 * std::max(1.0, std::fabs(u0_max_));
    return {u0_min_ - pad, u0_max_ + pad};
  }

  /// Points of the evaluation grid over grid_box, row-major (last axis fastest).
  std::vector<Point> grid_points() const {
    std::vector<Point> out;
    std::size_t total = 1;
    for (int c : space_grid_) total *= static_cast<std::size_t>(c);
    out.reserve(total);
    std::vector<std::size_t> idx(static_cast<std::size_t>(n_), 0);
    for (std::size_t k = 0; k < total; ++k) {
      Point p(static_cast<std::size_t>(n_));
      for (std::size_t d = 0; d < p.size(); ++d) p[d] = grid_coord(d, idx[d]);
      out.push_back(std::move(p));
      for (std::size_t d = idx.size(); d-- > 0;) {
        if (++idx[d] < static_cast<std::size_t>(space_grid_[d])) break;
        idx[d] = 0;
      }
    }
    return out;
  }

  double grid_coord(std::size_t axis, std::size_t k) const {
    const auto& b = grid_box_[axis];
    const auto m = static_cast<std::size_t>(space_grid_[axis]);
    if (k + 1 == m) return b.hi;
    return b.lo + b.width() * static_cast<double>(k) / static_cast<double>(m - 1);
  }

  double grid_spacing(std::size_t axis) const {
    return grid_box_[axis].width() / static_cast<double>(space_grid_[axis] - 1);
  }

private:
  friend ProblemSpec build_problem(const ProblemConfig& cfg);

  int n_ = 1;
  double sigma_ = 0.0;
  Tolerances tol_;
  std::vector<Interval> box_, grid_box_;
  std::vector<int> space_grid_;
  std::vector<double> time_points_;
  std::uint64_t rng_seed_ = 0;
  VelocityField vel_;
  InitialData init_;
  double u0_min_ = 0.0, u0_max_ = 0.0;
  ProblemConfig cfg_;
};

/// A(t,u) as a vector.
inline Point flow_displacement(const ProblemSpec& spec, double t, double u) {
  if (t < 0.0) throw ValidationError("flow_displacement requires t >= 0");
  Point A(static_cast<std::size_t>(spec.n()));
  for (int i = 0; i < spec.n(); ++i) A[static_cast<std::size_t>(i)] = spec.flow(i, t, u);
  return A;
}

namespace detail {

inline std::vector<Expr> parse_list(const std::vector<std::string>& src,
                                    const std::vector<std::string>& vars, const std::string& field) {
  std::vector<Expr> out;
  for (std::size_t i = 0; i < src.size(); ++i) {
    try {
      out.push_back(parse_expr(src[i], vars));
    } catch (const ParseError& e) {
      throw ValidationError(field + "[" + std::to_string(i) + "]: " + e.kind() + ": " + e.what());
    }
  }
  return out;
}

inline Expr parse_one(const std::string& src, const std::vector<std::string>& vars,
                      const std::string& field) {
  try {
    return parse_expr(src, vars);
  } catch (const ParseError& e) {
    throw ValidationError(field + ": " + e.kind() + ": " + e.what());
  }
}

inline void check_boxes(const std::vector<Interval>& b, int n, const std::string& field) {
  if (static_cast<int>(b.size()) != n)
    throw ValidationError(field + " must have " + std::to_string(n) + " intervals");
  for (const auto& iv : b)
    if (!(iv.lo < iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi))
      throw ValidationError(field + ": each interval needs lo < hi");
}

/// Visits a uniform sample of the box with at most `cap` points.
template <class F>
void sample_box(const std::vector<Interval>& box, std::size_t cap, F&& f) {
  const std::size_t n = box.size();
  std::size_t per = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(cap), 1.0 / n))));
  std::vector<std::size_t> idx(n, 0);
  std::size_t total = 1;
  for (std::size_t d = 0; d < n; ++d) total *= per;
  Point x(n);
  for (std::size_t k = 0; k < total; ++k) {
    for (std::size_t d = 0; d < n; ++d)
      x[d] = box[d].lo + box[d].width() * static_cast<double>(idx[d]) / static_cast<double>(per - 1);
    f(std::span<const double>(x));
    for (std::size_t d = n; d-- > 0;) {
      if (++idx[d] < per) break;
      idx[d] = 0;
    }
  }
}

}  // namespace detail

/// Parses expressions, applies defaults and checks every invariant.
inline ProblemSpec build_problem(const ProblemConfig& cfg) {
  if (cfg.n < 1) throw ValidationError("n must be a positive integer");
  const std::size_t n = static_cast<std::size_t>(cfg.n);
  const std::vector<std::string> tu = {"t", "u"};
  const auto xs = detail::space_vars(cfg.n);

  ProblemSpec p;
  p.cfg_ = cfg;
  p.n_ = cfg.n;
  p.tol_ = cfg.tol;
  p.rng_seed_ = cfg.rng_seed;

  if (cfg.a.size() != n) throw ValidationError("a must have n components");
  p.vel_.a = detail::parse_list(cfg.a, tu, "a");
  if (cfg.a_u) {
    if (cfg.a_u->size() != n) throw ValidationError("a_u must have n components");
    p.vel_.a_u = detail::parse_list(*cfg.a_u, tu, "a_u");
  }
  if (cfg.A) {
    if (cfg.A->size() != n) throw ValidationError("A must have n components");
    p.vel_.A = detail::parse_list(*cfg.A, tu, "A");
  }
  for (const auto& e : p.vel_.a) p.vel_.time_dependent = p.vel_.time_dependent || e.uses(0);
  p.init_.u0 = detail::parse_one(cfg.u0, xs, "u0");
  p.init_.rho0 = detail::parse_one(cfg.rho0, xs, "rho0");
  if (cfg.grad_u0) {
    if (cfg.grad_u0->size() != n) throw ValidationError("grad_u0 must have n components");
    p.init_.grad_u0 = detail::parse_list(*cfg.grad_u0, xs, "grad_u0");
  }

  if (!(cfg.sigma >= 0.0) || !std::isfinite(cfg.sigma)) throw ValidationError("sigma must be >= 0");
  p.sigma_ = cfg.sigma;
  detail::check_boxes(cfg.box, cfg.n, "box");
  p.box_ = cfg.box;
  p.grid_box_ = cfg.grid_box ? *cfg.grid_box : cfg.box;
  detail::check_boxes(p.grid_box_, cfg.n, "grid_box");
  if (cfg.space_grid.size() != n) throw ValidationError("space_grid must have n entries");
  for (int c : cfg.space_grid)
    if (c < 2) throw ValidationError("space_grid counts must be >= 2");
  p.space_grid_ = cfg.space_grid;
  if (cfg.time_points.empty()) throw ValidationError("time_points must not be empty");
  for (std::size_t k = 0; k < cfg.time_points.size(); ++k) {
    if (!(cfg.time_points[k] >= 0.0)) throw ValidationError("time_points must be nonnegative");
    if (k > 0 && !(cfg.time_points[k] > cfg.time_points[k - 1]))
      throw ValidationError("time_points must be strictly increasing");
  }
  p.time_points_ = cfg.time_points;

  const Tolerances& tl = cfg.tol;
  if (!(tl.quad_tol_time > 0) || !(tl.kernel_cutoff > 0) || !(tl.newton_tol > 0) || tl.max_iter < 1 ||
      !(tl.blowup_tol > 0) || !(tl.near_blowup_margin > 0) || !(tl.denom_floor > 0) ||
      tl.panel_order < 1 || !(tl.panel_width_factor > 0) || tl.min_panels < 1 || tl.blowup_grid < 2 ||
      tl.blowup_grid_cap < 2 || !(tl.blowup_t_max > 0))
    throw ValidationError("tolerances must be positive");

  // Initial data over the truncation box.
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  try {
    detail::sample_box(p.box_, 200001, [&](std::span<const double> x) {
      const double r = p.rho0(x);
      if (r < 0.0) throw ValidationError("rho0 is negative on the box (rho0 = " + std::to_string(r) + ")");
      const double u = p.u0(x);
      lo = std::min(lo, u);
      hi = std::max(hi, u);
    });
  } catch (const EvalDomainError& e) {
    throw ValidationError(std::string("initial data not evaluable on the box: ") + e.what());
  }
  p.u0_min_ = lo;
  p.u0_max_ = hi;

  // Consistency of optional analytic derivatives on a 20x20 (t,u) grid.
  const Interval ub = p.u0_bracket();
  const double t_hi = std::max(1.0, cfg.time_points.back());
  try {
    for (int it = 0; it < 20; ++it) {
      const double t = t_hi * it / 19.0;
      for (int iu = 0; iu < 20; ++iu) {
        const double u = ub.lo + ub.width() * iu / 19.0;
        for (int i = 0; i < cfg.n; ++i) {
          const double ai = p.a(i, t, u);
          if (!p.vel_.a_u.empty()) {
            const double h = detail::diff_step(u);
            const double num = (p.a(i, t, u + h) - p.a(i, t, u - h)) / (2.0 * h);
            if (!detail::close_rel(p.a_u(i, t, u), num, 1e-6))
              throw ValidationError("analytic a_u[" + std::to_string(i) + "] disagrees with d a/d u");
          }
          if (!p.vel_.A.empty()) {
            const auto& Ai = p.vel_.A[static_cast<std::size_t>(i)];
            const double h = detail::diff_step(t);
            const double num = t - h < 0.0
                                   ? (-3.0 * Ai({t, u}) + 4.0 * Ai({t + h, u}) - Ai({t + 2 * h, u})) / (2 * h)
                                   : (Ai({t + h, u}) - Ai({t - h, u})) / (2.0 * h);
            if (!detail::close_rel(ai, num, 1e-6))
              throw ValidationError("analytic A[" + std::to_string(i) + "] is not an antiderivative of a");
          }
        }
      }
    }
  } catch (const EvalDomainError& e) {
    throw ValidationError(std::string("velocity not evaluable on the range of u0: ") + e.what());
  }
  if (!p.init_.grad_u0.empty()) {
    detail::sample_box(p.box_, 2000, [&](std::span<const double> x) {
      const Point g = p.grad_u0(x);
      Point xp(x.begin(), x.end());
      for (std::size_t i = 0; i < n; ++i) {
        const double h = detail::diff_step(x[i]);
        xp[i] = x[i] + h;
        const double fp = p.u0(xp);
        xp[i] = x[i] - h;
        const double fm = p.u0(xp);
        xp[i] = x[i];
        if (!detail::close_rel(g[i], (fp - fm) / (2 * h), 1e-6))
          throw ValidationError("analytic grad_u0[" + std::to_string(i) + "] disagrees with u0");
      }
    });
  }
  return p;
}

// JSON ---------------------------------------------------------------------

namespace detail {

template <class T>
T get_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw SchemaError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(std::string("field '") + key + "' has the wrong type");
  }
}

inline std::vector<Interval> get_box(const nlohmann::json& j, const char* key) {
  const auto raw = get_field<std::vector<std::vector<double>>>(j, key);
  std::vector<Interval> out;
  for (const auto& r : raw) {
    if (r.size() != 2) throw SchemaError(std::string("field '") + key + "' needs [lo, hi] pairs");
    out.push_back({r[0], r[1]});
  }
  return out;
}

inline nlohmann::json box_json(const std::vector<Interval>& b) {
  auto j = nlohmann::json::array();
  for (const auto& iv : b) j.push_back({iv.lo, iv.hi});
  return j;
}

}  // namespace detail

inline ProblemConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("config must be a JSON object");
  static const std::set<std::string> known = {"n",      "a",          "a_u",      "A",
                                              "u0",     "rho0",       "grad_u0",  "sigma",
                                              "box",    "grid_box",   "space_grid", "time_points",
                                              "rng_seed", "tolerances"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw SchemaError("unknown field '" + k + "'");

  ProblemConfig c;
  c.n = detail::get_field<int>(j, "n");
  c.a = detail::get_field<std::vector<std::string>>(j, "a");
  if (j.contains("a_u")) c.a_u = detail::get_field<std::vector<std::string>>(j, "a_u");
  if (j.contains("A")) c.A = detail::get_field<std::vector<std::string>>(j, "A");
  c.u0 = detail::get_field<std::string>(j, "u0");
  c.rho0 = detail::get_field<std::string>(j, "rho0");
  if (j.contains("grad_u0")) c.grad_u0 = detail::get_field<std::vector<std::string>>(j, "grad_u0");
  c.sigma = detail::get_field<double>(j, "sigma");
  c.box = detail::get_box(j, "box");
  if (j.contains("grid_box")) c.grid_box = detail::get_box(j, "grid_box");
  c.space_grid = detail::get_field<std::vector<int>>(j, "space_grid");
  c.time_points = detail::get_field<std::vector<double>>(j, "time_points");
  if (j.contains("rng_seed")) c.rng_seed = detail::get_field<std::uint64_t>(j, "rng_seed");

  if (j.contains("tolerances")) {
    const auto& tj = j.at("tolerances");
    if (!tj.is_object()) throw SchemaError("field 'tolerances' must be an object");
    Tolerances& t = c.tol;
    const auto num = [&](const char* key, auto& slot) {
      if (tj.contains(key)) slot = detail::get_field<std::decay_t<decltype(slot)>>(tj, key);
    };
    static const std::set<std::string> tkeys = {
        "quad_tol_time", "kernel_cutoff", "newton_tol",   "max_iter",        "blowup_tol",
        "near_blowup_margin", "denom_floor", "panel_order", "panel_width_factor", "min_panels",
        "blowup_grid",   "blowup_grid_cap", "blowup_t_max"};
    for (const auto& [k, v] : tj.items())
      if (!tkeys.count(k)) throw SchemaError("unknown tolerance '" + k + "'");
    num("quad_tol_time", t.quad_tol_time);
    num("kernel_cutoff", t.kernel_cutoff);
    num("newton_tol", t.newton_tol);
    num("max_iter", t.max_iter);
    num("blowup_tol", t.blowup_tol);
    num("near_blowup_margin", t.near_blowup_margin);
    num("denom_floor", t.denom_floor);
    num("panel_order", t.panel_order);
    num("panel_width_factor", t.panel_width_factor);
    num("min_panels", t.min_panels);
    num("blowup_grid", t.blowup_grid);
    num("blowup_grid_cap", t.blowup_grid_cap);
    num("blowup_t_max", t.blowup_t_max);
  }
  return c;
}

inline nlohmann::json config_to_json(const ProblemConfig& c) {
  nlohmann::json j;
  j["n"] = c.n;
  j["a"] = c.a;
  if (c.a_u) j["a_u"] = *c.a_u;
  if (c.A) j["A"] = *c.A;
  j["u0"] = c.u0;
  j["rho0"] = c.rho0;
  if (c.grad_u0) j["grad_u0"] = *c.grad_u0;
  j["sigma"] = c.sigma;
  j["box"] = detail::box_json(c.box);
  if (c.grid_box) j["grid_box"] = detail::box_json(*c.grid_box);
  j["space_grid"] = c.space_grid;
  j["time_points"] = c.time_points;
  j["rng_seed"] = c.rng_seed;
  const Tolerances& t = c.tol;
  j["tolerances"] = {{"quad_tol_time", t.quad_tol_time},
                     {"kernel_cutoff", t.kernel_cutoff},
                     {"newton_tol", t.newton_tol},
                     {"max_iter", t.max_iter},
                     {"blowup_tol", t.blowup_tol},
                     {"near_blowup_margin", t.near_blowup_margin},
                     {"denom_floor", t.denom_floor},
                     {"panel_order", t.panel_order},
                     {"panel_width_factor", t.panel_width_factor},
                     {"min_panels", t.min_panels},
                     {"blowup_grid", t.blowup_grid},
                     {"blowup_grid_cap", t.blowup_grid_cap},
                     {"blowup_t_max", t.blowup_t_max}};
  return j;
}

inline ProblemSpec load_problem(const std::string& text) { return build_problem(parse_config(text)); }

}  // namespace charstoch
