#pragma once

// Stochastic-characteristics representation of the conservation law.
//
// With dX = a(t,U) dt + sigma dW, dU = 0 and initial law
// delta(u - u0(y)) rho0(y) dy, the density of (X,U) at time t is the
// push-forward of rho0 along y -> y + A(t,u0(y)) convolved with an
// isotropic Gaussian of variance sigma^2 t.  Moments of P(t,x,du) are
// therefore integrals over the initial points y,
//
//   int phi(u) P(t,x,du) = c_n int phi(u0(y)) rho0(y) K(t,x,y) dy,
//   K = exp(-|A(t,u0(y)) + y - x|^2 / (2 sigma^2 t)),
//   c_n = (2 pi t sigma^2)^(-n/2),
//
// evaluated here by tensor Gauss–Legendre quadrature over the truncation
// box, restricted to nodes whose transported point lies within
// kernel_cutoff * sigma * sqrt(t) of x.

#include <charstoch/errors.hpp>
#include <charstoch/parallel.hpp>
#include <charstoch/problem.hpp>
#include <charstoch/quadrature.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace charstoch {

/// Exponent arguments above this underflow a double; the weight is 0.
inline constexpr double kUnderflowExponent = 745.0;

struct KernelContext {
  double t = 0.0;
  Point x;
  double sigma = 0.0;
  double cutoff_radius = 0.0;  // k * sigma * sqrt(t)
  double normalization = 0.0;  // (2 pi t sigma^2)^(-n/2)

  static KernelContext make(double t, Point x, double sigma, double k) {
    const double var = sigma * sigma * t;
    if (!(var >= 1e-300))
      throw DegenerateKernel("sigma^2 t = " + std::to_string(var) + " is below 1e-300");
    KernelContext c;
    c.t = t;
    c.sigma = sigma;
    c.cutoff_radius = k * std::sqrt(var);
    c.normalization = std::pow(2.0 * std::numbers::pi * var, -0.5 * static_cast<double>(x.size()));
    c.x = std::move(x);
    return c;
  }

  double variance() const noexcept { return sigma * sigma * t; }
};

/// exp(-|A + y - x|^2 / (2 sigma^2 t)) without the normalization.
inline double kernel_weight(const KernelContext& ctx, std::span<const double> y,
                            std::span<const double> Ay) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = Ay[i] + y[i] - ctx.x[i];
    d2 += d * d;
  }
  const double arg = d2 / (2.0 * ctx.variance());
  return arg > kUnderflowExponent ? 0.0 : std::exp(-arg);
}

/// Number of panels per axis for kernel scale sigma*sqrt(t).
inline std::size_t panels_for(const Tolerances& tol, double width, double scale) {
  const double pw = tol.panel_width_factor * scale;
  const double need = pw > 0 ? std::ceil(width / pw) : 0.0;
  return static_cast<std::size_t>(std::max<double>(tol.min_panels, need));
}

inline QuadratureGrid make_box_grid(const std::vector<Interval>& box, const Tolerances& tol,
                                    double scale) {
  std::vector<AxisRule> axes;
  for (const auto& b : box)
    axes.push_back(composite_rule(b.lo, b.hi, panels_for(tol, b.width(), scale), tol.panel_order));
  return QuadratureGrid(std::move(axes));
}

/// Kernel moments at one point x (before normalization unless noted).
struct KernelMoments {
  double mass = 0.0;        // sum w rho0 K
  double u = 0.0;           // sum w rho0 u0 K
  Point a;                  // sum w rho0 a_i K
};

struct SigmaFields {
  double rho = 0.0;
  double u = 0.0;
  Point a;
};

/// Per-node data for one (spec, t, sigma), shared read-only by every x.
class KernelQuadrature {
public:
  /// `scale` fixes the panel width (defaults to sigma*sqrt(t)); passing
  /// a common scale keeps the node set identical across several t.
  KernelQuadrature(const ProblemSpec& spec, double t, std::optional<double> scale = {})
      : spec_(&spec), t_(t), n_(static_cast<std::size_t>(spec.n())) {
    if (!(t > 0.0)) throw DegenerateKernel("kernel quadrature needs t > 0");
    const double var = spec.sigma() * spec.sigma() * t;
    if (!(var >= 1e-300))
      throw DegenerateKernel("sigma^2 t = " + std::to_string(var) + " is below 1e-300");
    var_ = var;
    radius_ = spec.tol().kernel_cutoff * std::sqrt(var);
    norm_ = std::pow(2.0 * std::numbers::pi * var, -0.5 * static_cast<double>(n_));
    const QuadratureGrid grid = make_box_grid(spec.box(), spec.tol(), scale.value_or(std::sqrt(var)));

    // Collect nodes with nonzero rho0; transported point z = y + A(t,u0(y)).
    struct Raw {
      double key;
      std::size_t k;
    };
    std::vector<Raw> order;
    std::vector<double> mass, u, y, z, a, at;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const std::span<const double> yk(grid.point(k), n_);
      const double m = grid.weight(k) * spec.rho0(yk);
      if (m == 0.0) continue;
      const double uk = spec.u0(yk);
      const std::size_t idx = mass.size();
      mass.push_back(m);
      u.push_back(uk);
      for (std::size_t i = 0; i < n_; ++i) {
        y.push_back(yk[i]);
        z.push_back(yk[i] + spec.flow(static_cast<int>(i), t, uk));
        a.push_back(spec.a(static_cast<int>(i), t, uk));
        at.push_back(spec.a_t(static_cast<int>(i), t, uk));
      }
      order.push_back({z[idx * n_], idx});
    }
    std::stable_sort(order.begin(), order.end(), [](const Raw& l, const Raw& r) { return l.key < r.key; });
    const std::size_t m = order.size();
    mass_.resize(m);
    u_.resize(m);
    y_.resize(m * n_);
    z_.resize(m * n_);
    a_.resize(m * n_);
    at_.resize(m * n_);
    key_.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t k = order[j].k;
      mass_[j] = mass[k];
      u_[j] = u[k];
      key_[j] = order[j].key;
      for (std::size_t i = 0; i < n_; ++i) {
        y_[j * n_ + i] = y[k * n_ + i];
        z_[j * n_ + i] = z[k * n_ + i];
        a_[j * n_ + i] = a[k * n_ + i];
        at_[j * n_ + i] = at[k * n_ + i];
      }
    }
  }

  const ProblemSpec& spec() const noexcept { return *spec_; }
  double t() const noexcept { return t_; }
  double variance() const noexcept { return var_; }
  double normalization() const noexcept { return norm_; }
  double cutoff_radius() const noexcept { return radius_; }
  std::size_t node_count() const noexcept { return mass_.size(); }

  /// Visits every node whose transported point is within the cutoff of x:
  /// f(node index, kernel weight K, displacement d = z - x).
  template <class F>
  void for_each_near(std::span<const double> x, F&& f) const {
    const auto first = std::lower_bound(key_.begin(), key_.end(), x[0] - radius_);
    const auto last = std::upper_bound(first, key_.end(), x[0] + radius_);
    const double r2 = radius_ * radius_;
    double d[16];
    std::vector<double> dbig;
    double* dp = d;
    if (n_ > 16) {
      dbig.resize(n_);
      dp = dbig.data();
    }
    for (auto it = first; it != last; ++it) {
      const auto j = static_cast<std::size_t>(it - key_.begin());
      double d2 = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        dp[i] = z_[j * n_ + i] - x[i];
        d2 += dp[i] * dp[i];
      }
      if (d2 > r2) continue;
      const double arg = d2 / (2.0 * var_);
      if (arg > kUnderflowExponent) continue;
      f(j, std::exp(-arg), std::span<const double>(dp, n_));
    }
  }

  /// c_n * int phi(u) P(t,x,du).
  double moment(std::span<const double> x, const std::function<double(double)>& phi) const {
    double s = 0.0;
    for_each_near(x, [&](std::size_t j, double K, auto) { s += mass_[j] * phi(u_[j]) * K; });
    return norm_ * s;
  }

  KernelMoments raw_moments(std::span<const double> x) const {
    KernelMoments m;
    m.a.assign(n_, 0.0);
    for_each_near(x, [&](std::size_t j, double K, auto) {
      const double w = mass_[j] * K;
      m.mass += w;
      m.u += w * u_[j];
      for (std::size_t i = 0; i < n_; ++i) m.a[i] += w * a_[j * n_ + i];
    });
    return m;
  }

  double rho(std::span<const double> x) const { return norm_ * raw_moments(x).mass; }

  /// rho_sigma, u_sigma, a_sigma at x; throws EmptyKernelSupport when the
  /// raw mass is below denom_floor.
  SigmaFields fields(std::span<const double> x) const {
    const KernelMoments m = raw_moments(x);
    if (!(m.mass >= spec_->tol().denom_floor))
      throw EmptyKernelSupport("no transported mass within the kernel cutoff of x");
    SigmaFields f;
    f.rho = norm_ * m.mass;
    f.u = m.u / m.mass;
    f.a.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) f.a[i] = m.a[i] / m.mass;
    return f;
  }

  // Correction integrals. grad_x of the kernel is K * (z - x)/(sigma^2 t).

  /// I^u = int (u - u_sigma)(a - a_sigma) . grad_x P(t,x,du), by direct
  /// quadrature of the centred product.
  double I_u(std::span<const double> x) const {
    const SigmaFields f = fields(x);
    double s = 0.0;
    for_each_near(x, [&](std::size_t j, double K, std::span<const double> d) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n_; ++i) dot += (a_[j * n_ + i] - f.a[i]) * d[i];
      const double w = mass_[j] * K;
      s += w * (u_[j] - f.u) * dot;
    });
    return norm_ * (s / var_);
  }

  /// I^a_i = int (a_i - a_sigma_i)(a - a_sigma) . grad_x P - int d_t a_i P.
  Point I_a(std::span<const double> x) const {
    const SigmaFields f = fields(x);
    Point s(n_, 0.0), st(n_, 0.0);
    for_each_near(x, [&](std::size_t j, double K, std::span<const double> d) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n_; ++i) dot += (a_[j * n_ + i] - f.a[i]) * d[i];
      const double w = mass_[j] * K;
      for (std::size_t i = 0; i < n_; ++i) {
        s[i] += w * (a_[j * n_ + i] - f.a[i]) * dot;
        st[i] += w * at_[j * n_ + i];
      }
    });
    for (std::size_t i = 0; i < n_; ++i) s[i] = norm_ * (s[i] / var_ - st[i]);
    return s;
  }

  /// Moment building blocks and their x-gradients (all normalized):
  /// M_1, M_u, M_{a_k}, M_{u a_k}; dM[k] holds d/dx_k of each.
  struct MomentGradients {
    double M1 = 0.0, Mu = 0.0;
    Point Ma, Mua;
    Point dM1, dMu;
    std::vector<Point> dMa, dMua;  // [component][direction]
  };

  MomentGradients moment_gradients(std::span<const double> x) const {
    MomentGradients g;
    g.Ma.assign(n_, 0.0);
    g.Mua.assign(n_, 0.0);
    g.dM1.assign(n_, 0.0);
    g.dMu.assign(n_, 0.0);
    g.dMa.assign(n_, Point(n_, 0.0));
    g.dMua.assign(n_, Point(n_, 0.0));
    for_each_near(x, [&](std::size_t j, double K, std::span<const double> d) {
      const double w = mass_[j] * K;
      g.M1 += w;
      g.Mu += w * u_[j];
      for (std::size_t i = 0; i < n_; ++i) {
        const double ai = a_[j * n_ + i];
        g.Ma[i] += w * ai;
        g.Mua[i] += w * u_[j] * ai;
      }
      for (std::size_t k = 0; k < n_; ++k) {
        const double wg = w * d[k] / var_;
        g.dM1[k] += wg;
        g.dMu[k] += wg * u_[j];
        for (std::size_t i = 0; i < n_; ++i) {
          g.dMa[i][k] += wg * a_[j * n_ + i];
          g.dMua[i][k] += wg * u_[j] * a_[j * n_ + i];
        }
      }
    });
    const auto scale = [&](double& v) { v *= norm_; };
    scale(g.M1);
    scale(g.Mu);
    for (std::size_t i = 0; i < n_; ++i) {
      scale(g.Ma[i]);
      scale(g.Mua[i]);
      scale(g.dM1[i]);
      scale(g.dMu[i]);
      for (std::size_t k = 0; k < n_; ++k) {
        scale(g.dMa[i][k]);
        scale(g.dMua[i][k]);
      }
    }
    return g;
  }

  /// Same quantity as I_u(), assembled from moment building blocks:
  /// sum_k d_k M_{u a_k} - u_s d_k M_{a_k} - a_s,k d_k M_u + u_s a_s,k d_k M_1.
  double I_u_from_moments(std::span<const double> x) const {
    const MomentGradients g = moment_gradients(x);
    if (!(g.M1 / norm_ >= spec_->tol().denom_floor))
      throw EmptyKernelSupport("no transported mass within the kernel cutoff of x");
    const double us = g.Mu / g.M1;
    double s = 0.0;
    for (std::size_t k = 0; k < n_; ++k) {
      const double ak = g.Ma[k] / g.M1;
      s += g.dMua[k][k] - us * g.dMa[k][k] - ak * g.dMu[k] + us * ak * g.dM1[k];
    }
    return s;
  }

private:
  const ProblemSpec* spec_;
  double t_;
  std::size_t n_;
  double var_ = 0.0, radius_ = 0.0, norm_ = 0.0;
  std::vector<double> key_, mass_, u_, y_, z_, a_, at_;
};

// Pointwise entry points ----------------------------------------------------

inline double eval_p_moment(const ProblemSpec& spec, double t, std::span<const double> x,
                            const std::function<double(double)>& phi) {
  return KernelQuadrature(spec, t).moment(x, phi);
}

inline double eval_rho_sigma(const ProblemSpec& spec, double t, std::span<const double> x) {
  if (t < 0.0) throw ValidationError("t must be >= 0");
  if (t == 0.0) return spec.rho0(x);
  return KernelQuadrature(spec, t).rho(x);
}

inline double eval_u_sigma(const ProblemSpec& spec, double t, std::span<const double> x) {
  if (t < 0.0) throw ValidationError("t must be >= 0");
  if (t == 0.0) return spec.u0(x);
  return KernelQuadrature(spec, t).fields(x).u;
}

inline Point eval_a_sigma(const ProblemSpec& spec, double t, std::span<const double> x) {
  if (t < 0.0) throw ValidationError("t must be >= 0");
  if (t == 0.0) {
    const double u = spec.u0(x);
    Point a(static_cast<std::size_t>(spec.n()));
    for (int i = 0; i < spec.n(); ++i) a[static_cast<std::size_t>(i)] = spec.a(i, 0.0, u);
    return a;
  }
  return KernelQuadrature(spec, t).fields(x).a;
}

// Grids ----------------------------------------------------------------------

enum class FieldKind { Rho, U, A };

inline const char* field_name(FieldKind k) {
  return k == FieldKind::Rho ? "rho" : k == FieldKind::U ? "u" : "a";
}

/// Field samples on the evaluation grid. `values` holds `components`
/// numbers per point, points row-major (last axis fastest).
struct FieldGrid {
  double t = 0.0;
  std::vector<std::vector<double>> axes;
  std::vector<double> spacing;
  std::size_t components = 1;
  std::vector<double> values;
  std::vector<unsigned char> valid;

  std::size_t point_count() const noexcept { return valid.size(); }
  double value(std::size_t point, std::size_t comp = 0) const { return values[point * components + comp]; }

  /// Coordinates of a flat point index.
  Point coords(std::size_t point) const {
    Point p(axes.size());
    for (std::size_t d = axes.size(); d-- > 0;) {
      p[d] = axes[d][point % axes[d].size()];
      point /= axes[d].size();
    }
    return p;
  }
};

inline FieldGrid make_field_grid(const ProblemSpec& spec, double t, std::size_t components) {
  FieldGrid g;
  g.t = t;
  g.components = components;
  std::size_t total = 1;
  for (std::size_t d = 0; d < static_cast<std::size_t>(spec.n()); ++d) {
    std::vector<double> ax;
    for (std::size_t k = 0; k < static_cast<std::size_t>(spec.space_grid()[d]); ++k)
      ax.push_back(spec.grid_coord(d, k));
    total *= ax.size();
    g.axes.push_back(std::move(ax));
    g.spacing.push_back(spec.grid_spacing(d));
  }
  g.values.assign(total * components, 0.0);
  g.valid.assign(total, 0);
  return g;
}

/// Evaluates rho_sigma, u_sigma or a_sigma on the space grid. Points with
/// no kernel support are masked invalid (values left at 0).
inline FieldGrid eval_field_grid(const ProblemSpec& spec, double t, FieldKind which) {
  if (t < 0.0) throw ValidationError("t must be >= 0");
  const std::size_t nc = which == FieldKind::A ? static_cast<std::size_t>(spec.n()) : 1;
  FieldGrid g = make_field_grid(spec, t, nc);
  std::optional<KernelQuadrature> kq;
  if (t > 0.0) kq.emplace(spec, t);
  parallel_for(g.point_count(), [&](std::size_t p) {
    const Point x = g.coords(p);
    try {
      if (which == FieldKind::Rho) {
        g.values[p] = kq ? kq->rho(x) : spec.rho0(x);
      } else if (which == FieldKind::U) {
        g.values[p] = kq ? kq->fields(x).u : spec.u0(x);
      } else {
        const Point a = kq ? kq->fields(x).a : eval_a_sigma(spec, 0.0, x);
        for (std::size_t i = 0; i < nc; ++i) g.values[p * nc + i] = a[i];
      }
      g.valid[p] = 1;
    } catch (const EmptyKernelSupport&) {
      g.valid[p] = 0;
    }
  });
  return g;
}

struct SweepEntry {
  double sigma = 0.0;
  double u = 0.0;
  Point a;
  double rho = 0.0;
  std::optional<std::string> error;  // error kind when the entry failed
};

/// u_sigma, a_sigma, rho_sigma at (t,x) for a strictly decreasing list of sigmas.
inline std::vector<SweepEntry> sigma_sweep(const ProblemSpec& spec, double t, std::span<const double> x,
                                           const std::vector<double>& sigmas) {
  if (!(t > 0.0)) throw ValidationError("sigma_sweep requires t > 0");
  for (std::size_t k = 0; k < sigmas.size(); ++k) {
    if (!(sigmas[k] > 0.0)) throw ValidationError("sigmas must be positive");
    if (k > 0 && !(sigmas[k] < sigmas[k - 1])) throw ValidationError("sigmas must be strictly decreasing");
  }
  std::vector<SweepEntry> out;
  for (double s : sigmas) {
    const ProblemSpec ps = spec.with_sigma(s);
    SweepEntry e;
    e.sigma = s;
    try {
      const SigmaFields f = KernelQuadrature(ps, t).fields(x);
      e.u = f.u;
      e.a = f.a;
      e.rho = f.rho;
    } catch (const EmptyKernelSupport& err) {
      e.error = err.kind();
    }
    out.push_back(std::move(e));
  }
  return out;
}

/// int rho_sigma(t,x) dx over the box enlarged by the largest transport
/// displacement plus the kernel cutoff, so that all transported mass is
/// inside the integration region.
inline double total_mass(const ProblemSpec& spec, double t) {
  if (t == 0.0) {
    const QuadratureGrid g = make_box_grid(spec.box(), spec.tol(), 0.0);
    std::vector<double> part(g.size());
    for (std::size_t k = 0; k < g.size(); ++k)
      part[k] = g.weight(k) * spec.rho0(std::span<const double>(g.point(k), g.dim()));
    return pairwise_sum(part);
  }
  const KernelQuadrature kq(spec, t);
  const Interval ub = spec.u0_bracket();
  std::vector<Interval> ext = spec.box();
  for (std::size_t i = 0; i < ext.size(); ++i) {
    double reach = 0.0;
    for (int s = 0; s <= 200; ++s) {
      const double u = ub.lo + ub.width() * s / 200.0;
      reach = std::max(reach, std::fabs(spec.flow(static_cast<int>(i), t, u)));
    }
    ext[i].lo -= reach + kq.cutoff_radius();
    ext[i].hi += reach + kq.cutoff_radius();
  }
  const QuadratureGrid g = make_box_grid(ext, spec.tol(), std::sqrt(kq.variance()));
  std::vector<double> part(g.size());
  parallel_for(g.size(), [&](std::size_t k) {
    part[k] = g.weight(k) * kq.rho(std::span<const double>(g.point(k), g.dim()));
  });
  return pairwise_sum(part);
}

}  // namespace charstoch
