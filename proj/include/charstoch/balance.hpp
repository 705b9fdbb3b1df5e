#pragma once

// Residual checks of the balance laws satisfied by the moment fields.
//
// For sigma > 0 (exact identities of the Fokker–Planck moments):
//   d_t rho + div(rho a)                     = 1/2 sigma^2 Lap rho
//   d_t(rho u) + div(rho u a)                = 1/2 sigma^2 Lap(rho u) - I^u
//   d_t(rho a_i) + div(rho a_i a)            = 1/2 sigma^2 Lap(rho a_i) - I^a_i
// and for the classical limit before blow-up (pressureless system):
//   d_t rho + div(rho a) = 0,  d_t(rho u) + div(rho u a) = 0,
//   d_t(rho a_i) + div(rho a_i a) = rho (d_t a_i)(t,u).
//
// Fields are sampled pointwise on a space-time lattice and the residuals
// are formed with second-order finite differences, so they vanish at
// second order in (h, dt).

#include <charstoch/characteristics.hpp>
#include <charstoch/errors.hpp>
#include <charstoch/parallel.hpp>
#include <charstoch/problem.hpp>
#include <charstoch/representation.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace charstoch {

struct Resolution {
  double h = 0.0;
  double dt = 0.0;
};

struct ResidualReport {
  std::string equation;
  double h = 0.0;
  double dt = 0.0;
  double max_residual = 0.0;
  double l1_residual = 0.0;
  /// max residual at the previous (coarser) resolution / this one.
  std::optional<double> ratio;
};

inline double eval_I_u_sigma(const ProblemSpec& spec, double t, std::span<const double> x) {
  return KernelQuadrature(spec, t).I_u(x);
}

inline Point eval_I_a_sigma(const ProblemSpec& spec, double t, std::span<const double> x) {
  return KernelQuadrature(spec, t).I_a(x);
}

/// Uniform space-time lattice over grid_box x [t0, t1]. Space points are
/// row-major (last axis fastest).
class SpaceTimeLattice {
public:
  SpaceTimeLattice(const ProblemSpec& spec, Interval window, Resolution res) : n_(static_cast<std::size_t>(spec.n())) {
    if (!(res.h > 0.0) || !(res.dt > 0.0)) throw ValidationError("resolution needs h > 0 and dt > 0");
    if (!(window.hi > window.lo) || window.lo < 0.0) throw ValidationError("time window must satisfy 0 <= t0 < t1");
    const double steps = (window.hi - window.lo) / res.dt;
    nt_ = static_cast<std::size_t>(std::llround(steps)) + 1;
    if (std::fabs(steps - static_cast<double>(nt_ - 1)) > 1e-6 || nt_ < 3)
      throw ValidationError("time window must hold an integer number (>= 2) of steps dt");
    for (std::size_t k = 0; k < nt_; ++k) times_.push_back(window.lo + res.dt * static_cast<double>(k));
    for (std::size_t d = 0; d < n_; ++d) {
      const auto& b = spec.grid_box()[d];
      const auto m = static_cast<std::size_t>(std::floor(b.width() / res.h + 1e-9)) + 1;
      if (m < 3) throw ValidationError("space step too large for grid_box");
      std::vector<double> ax;
      for (std::size_t k = 0; k < m; ++k) ax.push_back(b.lo + res.h * static_cast<double>(k));
      axes_.push_back(std::move(ax));
    }
    space_ = 1;
    for (const auto& ax : axes_) space_ *= ax.size();
    res_ = res;
  }

  std::size_t dim() const noexcept { return n_; }
  std::size_t nt() const noexcept { return nt_; }
  std::size_t space_points() const noexcept { return space_; }
  const std::vector<double>& times() const noexcept { return times_; }
  Resolution resolution() const noexcept { return res_; }

  Point coords(std::size_t p) const {
    Point x(n_);
    for (std::size_t d = n_; d-- > 0;) {
      x[d] = axes_[d][p % axes_[d].size()];
      p /= axes_[d].size();
    }
    return x;
  }

  /// Flat index offset of one step along axis d.
  std::size_t stride(std::size_t d) const {
    std::size_t s = 1;
    for (std::size_t e = d + 1; e < n_; ++e) s *= axes_[e].size();
    return s;
  }

  /// True when p has both neighbours along every axis.
  bool interior(std::size_t p) const {
    for (std::size_t d = n_; d-- > 0;) {
      const std::size_t i = p % axes_[d].size();
      if (i == 0 || i + 1 == axes_[d].size()) return false;
      p /= axes_[d].size();
    }
    return true;
  }

private:
  std::size_t n_;
  std::size_t nt_ = 0, space_ = 0;
  std::vector<double> times_;
  std::vector<std::vector<double>> axes_;
  Resolution res_;
};

/// Scalar samples q[k][p] over a lattice (time k, space p).
using LatticeField = std::vector<std::vector<double>>;

/// r = d_t q + sum_k d_k flux_k - diffusion * Lap q + source at every
/// interior space point and every time. Central differences in space,
/// central in time with one-sided second-order stencils at the window
/// edges. Returns residuals indexed like q (non-interior entries NaN).
inline LatticeField balance_residual(const SpaceTimeLattice& L, const LatticeField& q,
                                     const std::vector<LatticeField>& flux, double diffusion,
                                     const LatticeField* source) {
  const double h = L.resolution().h, dt = L.resolution().dt;
  const std::size_t nt = L.nt();
  LatticeField r(nt, std::vector<double>(L.space_points(), std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t k = 0; k < nt; ++k) {
    for (std::size_t p = 0; p < L.space_points(); ++p) {
      if (!L.interior(p)) continue;
      double qt;
      if (k == 0)
        qt = (-3.0 * q[0][p] + 4.0 * q[1][p] - q[2][p]) / (2.0 * dt);
      else if (k + 1 == nt)
        qt = (3.0 * q[k][p] - 4.0 * q[k - 1][p] + q[k - 2][p]) / (2.0 * dt);
      else
        qt = (q[k + 1][p] - q[k - 1][p]) / (2.0 * dt);
      double div = 0.0, lap = 0.0;
      for (std::size_t d = 0; d < L.dim(); ++d) {
        const std::size_t s = L.stride(d);
        div += (flux[d][k][p + s] - flux[d][k][p - s]) / (2.0 * h);
        lap += (q[k][p + s] - 2.0 * q[k][p] + q[k][p - s]) / (h * h);
      }
      r[k][p] = qt + div - diffusion * lap + (source ? (*source)[k][p] : 0.0);
    }
  }
  return r;
}

namespace detail {

inline ResidualReport summarize(const std::string& eq, const SpaceTimeLattice& L, const LatticeField& r) {
  ResidualReport rep;
  rep.equation = eq;
  rep.h = L.resolution().h;
  rep.dt = L.resolution().dt;
  const double cell = std::pow(rep.h, static_cast<double>(L.dim())) * rep.dt;
  for (const auto& row : r)
    for (double v : row) {
      if (std::isnan(v)) continue;
      if (!std::isfinite(v)) throw NoConvergence("non-finite residual in " + eq);
      rep.max_residual = std::max(rep.max_residual, std::fabs(v));
      rep.l1_residual += std::fabs(v) * cell;
    }
  return rep;
}

inline LatticeField lattice_field(const SpaceTimeLattice& L) {
  return LatticeField(L.nt(), std::vector<double>(L.space_points(), 0.0));
}

/// Sampled rho, u, a (and optionally I^u, I^a, d_t a moments) at one lattice.
struct LatticeSamples {
  LatticeField rho, u, Iu;
  std::vector<LatticeField> a, Ia, at;
};

}  // namespace detail

/// Residuals of the sigma > 0 system at one resolution.
inline std::vector<ResidualReport> residual_sigma_system(const ProblemSpec& spec, Interval window,
                                                          Resolution res) {
  const SpaceTimeLattice L(spec, window, res);
  if (!(window.lo > 0.0)) throw ValidationError("sigma-system window needs t0 > 0");
  const std::size_t n = L.dim();
  detail::LatticeSamples s;
  s.rho = s.u = s.Iu = detail::lattice_field(L);
  s.a.assign(n, detail::lattice_field(L));
  s.Ia.assign(n, detail::lattice_field(L));
  const double scale = spec.sigma() * std::sqrt(window.lo);
  for (std::size_t k = 0; k < L.nt(); ++k) {
    const KernelQuadrature kq(spec, L.times()[k], scale);
    parallel_for(L.space_points(), [&](std::size_t p) {
      const Point x = L.coords(p);
      const SigmaFields f = kq.fields(x);
      s.rho[k][p] = f.rho;
      s.u[k][p] = f.u;
      for (std::size_t i = 0; i < n; ++i) s.a[i][k][p] = f.a[i];
      if (!L.interior(p)) return;
      s.Iu[k][p] = kq.I_u(x);
      const Point Ia = kq.I_a(x);
      for (std::size_t i = 0; i < n; ++i) s.Ia[i][k][p] = Ia[i];
    });
  }
  const double diff = 0.5 * spec.sigma() * spec.sigma();
  const auto product = [&](const LatticeField& f, const LatticeField& g) {
    LatticeField out = f;
    for (std::size_t k = 0; k < out.size(); ++k)
      for (std::size_t p = 0; p < out[k].size(); ++p) out[k][p] *= g[k][p];
    return out;
  };
  std::vector<ResidualReport> out;
  const auto equation = [&](const std::string& id, const LatticeField& q, const LatticeField* source) {
    std::vector<LatticeField> flux;
    for (std::size_t d = 0; d < n; ++d) flux.push_back(product(q, s.a[d]));
    out.push_back(detail::summarize(id, L, balance_residual(L, q, flux, diff, source)));
  };
  equation("mass_sigma", s.rho, nullptr);
  equation("momentum_u_sigma", product(s.rho, s.u), &s.Iu);
  for (std::size_t i = 0; i < n; ++i)
    equation("momentum_a_sigma_" + std::to_string(i + 1), product(s.rho, s.a[i]), &s.Ia[i]);
  return out;
}

/// Residuals of the pressureless limit system built from the classical
/// fields; the window must end before 0.9 t*.
inline std::vector<ResidualReport> residual_pressureless(const ProblemSpec& spec, Interval window,
                                                          Resolution res) {
  const BlowupReport b = blow_up_time(spec);
  if (b.finite && window.hi > 0.9 * b.t_star)
    throw NearBlowup("window end " + std::to_string(window.hi) + " exceeds 0.9 t* = " +
                     std::to_string(0.9 * b.t_star));
  const SpaceTimeLattice L(spec, window, res);
  const std::size_t n = L.dim();
  detail::LatticeSamples s;
  s.rho = s.u = detail::lattice_field(L);
  s.a.assign(n, detail::lattice_field(L));
  s.at.assign(n, detail::lattice_field(L));
  for (std::size_t k = 0; k < L.nt(); ++k) {
    const double t = L.times()[k];
    parallel_for(L.space_points(), [&](std::size_t p) {
      const Point x = L.coords(p);
      const double u = solve_implicit(spec, t, x);
      s.u[k][p] = u;
      s.rho[k][p] = eval_rho_bar(spec, t, x);
      for (std::size_t i = 0; i < n; ++i) {
        s.a[i][k][p] = spec.a(static_cast<int>(i), t, u);
        s.at[i][k][p] = -s.rho[k][p] * spec.a_t(static_cast<int>(i), t, u);
      }
    });
  }
  std::vector<ResidualReport> out;
  const auto equation = [&](const std::string& id, const LatticeField& q, const LatticeField* source) {
    std::vector<LatticeField> flux;
    for (std::size_t d = 0; d < n; ++d) {
      LatticeField f = q;
      for (std::size_t k = 0; k < f.size(); ++k)
        for (std::size_t p = 0; p < f[k].size(); ++p) f[k][p] *= s.a[d][k][p];
      flux.push_back(std::move(f));
    }
    out.push_back(detail::summarize(id, L, balance_residual(L, q, flux, 0.0, source)));
  };
  const auto times_rho = [&](const LatticeField& g) {
    LatticeField f = s.rho;
    for (std::size_t k = 0; k < f.size(); ++k)
      for (std::size_t p = 0; p < f[k].size(); ++p) f[k][p] *= g[k][p];
    return f;
  };
  equation("mass_bar", s.rho, nullptr);
  equation("momentum_u_bar", times_rho(s.u), nullptr);
  for (std::size_t i = 0; i < n; ++i)
    equation("momentum_a_bar_" + std::to_string(i + 1), times_rho(s.a[i]), &s.at[i]);
  return out;
}

/// Runs a residual routine at successive resolutions and fills the
/// refinement ratio (previous max / current max) per equation.
template <class Routine>
std::vector<ResidualReport> residual_refinement(const ProblemSpec& spec, Interval window,
                                                const std::vector<Resolution>& resolutions, Routine&& routine) {
  std::vector<ResidualReport> all;
  std::vector<ResidualReport> prev;
  for (const Resolution& r : resolutions) {
    std::vector<ResidualReport> cur = routine(spec, window, r);
    for (std::size_t e = 0; e < cur.size() && !prev.empty(); ++e)
      if (cur[e].max_residual > 0.0) cur[e].ratio = prev[e].max_residual / cur[e].max_residual;
    all.insert(all.end(), cur.begin(), cur.end());
    prev = std::move(cur);
  }
  return all;
}

struct ITermRow {
  double sigma = 0.0;
  double I_u_sup = 0.0;
  Point I_a_sup;
};

/// Sup-norms of I^u and I^a over the space grid for each sigma.
inline std::vector<ITermRow> i_term_persistence(const ProblemSpec& spec, const std::vector<double>& sigmas,
                                                double t_probe) {
  if (!(t_probe > 0.0)) throw ValidationError("t_probe must be > 0");
  const std::vector<Point> pts = spec.grid_points();
  const std::size_t n = static_cast<std::size_t>(spec.n());
  std::vector<ITermRow> rows;
  for (double sg : sigmas) {
    if (!(sg > 0.0)) throw ValidationError("sigmas must be positive");
    const ProblemSpec ps = spec.with_sigma(sg);
    const KernelQuadrature kq(ps, t_probe);
    std::vector<double> iu(pts.size(), 0.0);
    std::vector<Point> ia(pts.size(), Point(n, 0.0));
    parallel_for(pts.size(), [&](std::size_t p) {
      try {
        iu[p] = kq.I_u(pts[p]);
        ia[p] = kq.I_a(pts[p]);
      } catch (const EmptyKernelSupport&) {
      }
    });
    ITermRow row;
    row.sigma = sg;
    row.I_a_sup.assign(n, 0.0);
    for (std::size_t p = 0; p < pts.size(); ++p) {
      row.I_u_sup = std::max(row.I_u_sup, std::fabs(iu[p]));
      for (std::size_t i = 0; i < n; ++i) row.I_a_sup[i] = std::max(row.I_a_sup[i], std::fabs(ia[p][i]));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace charstoch
