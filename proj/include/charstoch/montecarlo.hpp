#pragma once

// Particle realization of the law P(t,dx,du). With sigma_2 = 0 the
// carried value U = u0(y) never changes, so X(t) = y + A(t,U) + sigma W(t)
// can be sampled exactly; Euler–Maruyama is kept as a cross-check.

#include <charstoch/errors.hpp>
#include <charstoch/parallel.hpp>
#include <charstoch/problem.hpp>
#include <charstoch/representation.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

namespace charstoch {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Each
/// (key, counter) pair maps to an independent block of 4 words, so any
/// particle's draws can be produced without touching a shared state.
class Philox4x32 {
public:
  using Block = std::array<std::uint32_t, 4>;

  static Block generate(Block ctr, std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }
};

/// Streams keyed by the run seed; counters address (particle, step, purpose).
class ParticleRng {
public:
  enum Purpose : std::uint32_t { InitialPosition = 0, Noise = 1 };

  explicit ParticleRng(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  /// Two uniforms in (0,1) for block `b` of the given stream.
  std::array<double, 2> uniforms(std::uint64_t particle, std::uint32_t step, Purpose purpose,
                                 std::uint32_t b) const {
    const auto w = Philox4x32::generate({static_cast<std::uint32_t>(particle),
                                         static_cast<std::uint32_t>(particle >> 32), step,
                                         (b << 8) | static_cast<std::uint32_t>(purpose)},
                                        key_);
    const auto to01 = [](std::uint32_t hi, std::uint32_t lo) {
      const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
      return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    };
    return {to01(w[0], w[1]), to01(w[2], w[3])};
  }

  /// `count` standard normals (Box–Muller) for one particle and step.
  void normals(std::uint64_t particle, std::uint32_t step, std::span<double> out) const {
    for (std::size_t k = 0; k < out.size(); k += 2) {
      const auto [u1, u2] = uniforms(particle, step, Noise, static_cast<std::uint32_t>(k / 2));
      const double r = std::sqrt(-2.0 * std::log(u1));
      out[k] = r * std::cos(2.0 * std::numbers::pi * u2);
      if (k + 1 < out.size()) out[k + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
    }
  }

private:
  std::array<std::uint32_t, 2> key_;
};

struct ParticleEnsemble {
  std::size_t dim = 1;
  std::uint64_t seed = 0;
  double t = 0.0;
  std::vector<double> y;  // initial points, size N*dim
  std::vector<double> U;  // carried values u0(y)
  std::vector<double> X;  // current positions, size N*dim
  std::vector<double> w;  // nonnegative weights, fixed after sampling

  std::size_t size() const noexcept { return U.size(); }
  std::span<const double> initial(std::size_t j) const { return {y.data() + j * dim, dim}; }
  std::span<const double> position(std::size_t j) const { return {X.data() + j * dim, dim}; }
  double total_weight() const { return pairwise_sum(w); }
};

/// Uniform points on the box with self-normalized importance weights
/// w_j proportional to rho0(y_j) and summing to the quadrature mass of rho0.
inline ParticleEnsemble sample_initial(const ProblemSpec& spec, std::size_t N) {
  if (N < 1) throw ValidationError("need at least one particle");
  const std::size_t n = static_cast<std::size_t>(spec.n());
  const ParticleRng rng(spec.rng_seed());
  ParticleEnsemble e;
  e.dim = n;
  e.seed = spec.rng_seed();
  e.y.resize(N * n);
  e.U.resize(N);
  e.w.resize(N);
  parallel_for(N, [&](std::size_t j) {
    for (std::size_t d = 0; d < n; d += 2) {
      const auto u = rng.uniforms(j, 0, ParticleRng::InitialPosition, static_cast<std::uint32_t>(d / 2));
      for (std::size_t q = 0; q < 2 && d + q < n; ++q) {
        const auto& b = spec.box()[d + q];
        e.y[j * n + d + q] = b.lo + b.width() * u[q];
      }
    }
    const std::span<const double> yj(e.y.data() + j * n, n);
    e.w[j] = spec.rho0(yj);
    e.U[j] = spec.u0(yj);
  });
  const double raw = pairwise_sum(e.w);
  if (!(raw > 0.0)) throw ZeroMass("rho0 vanishes at every sampled point");
  const double mass = total_mass(spec, 0.0);
  const double scale = mass / raw;
  for (auto& w : e.w) w *= scale;
  e.X = e.y;
  return e;
}

/// Exact law at time t: X = y + A(t,U) + sigma sqrt(t) Z.
inline ParticleEnsemble evolve_exact(const ParticleEnsemble& ens, const ProblemSpec& spec, double t) {
  if (t < 0.0) throw ValidationError("t must be >= 0");
  const std::size_t n = ens.dim;
  const ParticleRng rng(ens.seed);
  ParticleEnsemble out = ens;
  out.t = t;
  const double s = spec.sigma() * std::sqrt(t);
  parallel_for(ens.size(), [&](std::size_t j) {
    double z[16] = {};
    std::vector<double> zbig;
    std::span<double> Z(z, n);
    if (n > 16) {
      zbig.resize(n);
      Z = zbig;
    }
    if (s > 0.0) rng.normals(j, 0, Z);
    for (std::size_t i = 0; i < n; ++i)
      out.X[j * n + i] = ens.y[j * n + i] + spec.flow(static_cast<int>(i), t, ens.U[j]) + s * Z[i];
  });
  return out;
}

/// M-step Euler–Maruyama from the initial points to time t.
inline ParticleEnsemble evolve_em(const ParticleEnsemble& ens, const ProblemSpec& spec, double t,
                                  std::size_t steps) {
  if (steps < 1) throw ValidationError("need at least one step");
  const std::size_t n = ens.dim;
  const ParticleRng rng(ens.seed);
  ParticleEnsemble out = ens;
  out.t = t;
  const double dt = t / static_cast<double>(steps);
  const double s = spec.sigma() * std::sqrt(dt);
  parallel_for(ens.size(), [&](std::size_t j) {
    std::vector<double> Z(n, 0.0);
    double* X = out.X.data() + j * n;
    std::copy_n(ens.y.data() + j * n, n, X);
    for (std::size_t k = 0; k < steps; ++k) {
      const double tau = dt * static_cast<double>(k);
      if (s > 0.0) rng.normals(j, static_cast<std::uint32_t>(k), Z);
      for (std::size_t i = 0; i < n; ++i) X[i] += spec.a(static_cast<int>(i), tau, ens.U[j]) * dt + s * Z[i];
    }
  });
  return out;
}

/// Default kernel bandwidth max(sigma sqrt(t) / 5, min grid spacing / 2).
inline double default_bandwidth(const ProblemSpec& spec, double t) {
  double hmin = spec.grid_spacing(0);
  for (std::size_t d = 1; d < static_cast<std::size_t>(spec.n()); ++d) hmin = std::min(hmin, spec.grid_spacing(d));
  return std::max(spec.sigma() * std::sqrt(t) / 5.0, 0.5 * hmin);
}

struct FieldEstimate {
  std::vector<double> rho;
  std::vector<double> u;
  std::vector<unsigned char> valid;
};

/// Weighted Gaussian KDE for rho and Nadaraya–Watson regression for u at
/// each point; contributions beyond 8h are dropped.
inline FieldEstimate estimate_fields(const ParticleEnsemble& ens, const ProblemSpec& spec,
                                     const std::vector<Point>& points, double h) {
  if (!(h > 0.0)) throw ValidationError("bandwidth must be positive");
  const std::size_t n = ens.dim;
  std::vector<std::size_t> order(ens.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return ens.X[l * n] < ens.X[r * n]; });
  std::vector<double> key(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) key[k] = ens.X[order[k] * n];

  const double norm = std::pow(2.0 * std::numbers::pi * h * h, -0.5 * static_cast<double>(n));
  const double radius = 8.0 * h, r2 = radius * radius;
  FieldEstimate est;
  est.rho.assign(points.size(), 0.0);
  est.u.assign(points.size(), 0.0);
  est.valid.assign(points.size(), 0);
  parallel_for(points.size(), [&](std::size_t p) {
    const Point& x = points[p];
    const auto first = std::lower_bound(key.begin(), key.end(), x[0] - radius);
    const auto last = std::upper_bound(first, key.end(), x[0] + radius);
    double den = 0.0, num = 0.0;
    for (auto it = first; it != last; ++it) {
      const std::size_t j = order[static_cast<std::size_t>(it - key.begin())];
      double d2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = ens.X[j * n + i] - x[i];
        d2 += d * d;
      }
      if (d2 > r2) continue;
      const double g = ens.w[j] * std::exp(-d2 / (2.0 * h * h));
      den += g;
      num += g * ens.U[j];
    }
    est.rho[p] = norm * den;
    if (norm * den >= spec.tol().denom_floor) {
      est.u[p] = num / den;
      est.valid[p] = 1;
    }
  });
  return est;
}

/// Estimates on the spec's space grid packed as FieldGrids (rho, u).
inline std::pair<FieldGrid, FieldGrid> estimate_field_grids(const ParticleEnsemble& ens,
                                                            const ProblemSpec& spec, double h) {
  FieldGrid rho = make_field_grid(spec, ens.t, 1);
  FieldGrid u = make_field_grid(spec, ens.t, 1);
  std::vector<Point> pts(rho.point_count());
  for (std::size_t p = 0; p < pts.size(); ++p) pts[p] = rho.coords(p);
  const FieldEstimate est = estimate_fields(ens, spec, pts, h);
  rho.values = est.rho;
  rho.valid.assign(pts.size(), 1);
  u.values = est.u;
  u.valid = est.valid;
  return {std::move(rho), std::move(u)};
}

}  // namespace charstoch
