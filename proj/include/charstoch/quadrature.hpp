#pragma once

#include <charstoch/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace charstoch {

/// Pairwise summation; the order depends only on the input length.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

/// Nodes and weights of the m-point Gauss–Legendre rule on [-1, 1].
struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline GaussLegendreRule gauss_legendre(int m) {
  GaussLegendreRule rule;
  rule.nodes.resize(static_cast<std::size_t>(m));
  rule.weights.resize(static_cast<std::size_t>(m));
  // Returns (P_m(x), P_m'(x)) by the three-term recurrence.
  const auto legendre = [m](double x) {
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= m; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    return std::pair{p1, m * (x * p1 - p0) / (x * x - 1.0)};
  };
  for (int i = 0; i < (m + 1) / 2; ++i) {
    // Tricomi initial guess, then Newton on P_m.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = legendre(x);
      const double dx = p / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-16) break;
    }
    const double dp = legendre(x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.nodes[static_cast<std::size_t>(m - 1 - i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(m - 1 - i)] = w;
  }
  if (m % 2 == 1) rule.nodes[static_cast<std::size_t>(m / 2)] = 0.0;
  return rule;
}

namespace detail {

template <class F>
double gl_panel(const F& f, double a, double b, const GaussLegendreRule& rule) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double s = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) s += rule.weights[k] * f(c + h * rule.nodes[k]);
  return s * h;
}

template <class F>
double adaptive_gl(const F& f, double a, double b, double whole, double tol, int depth,
                   const GaussLegendreRule& rule) {
  const double m = 0.5 * (a + b);
  const double left = gl_panel(f, a, m, rule);
  const double right = gl_panel(f, m, b, rule);
  const double err = std::fabs(left + right - whole);
  if (err <= tol || depth <= 0) return left + right;
  return adaptive_gl(f, a, m, left, 0.5 * tol, depth - 1, rule) +
         adaptive_gl(f, m, b, right, 0.5 * tol, depth - 1, rule);
}

}  // namespace detail

/// Adaptive Gauss–Legendre integration of f over [a, b] to absolute
/// tolerance `tol`: a 10-point panel is accepted once it agrees with its
/// two halves, otherwise both halves are refined recursively.
template <class F>
double integrate_adaptive(const F& f, double a, double b, double tol, int max_depth = 30) {
  static const GaussLegendreRule rule = gauss_legendre(10);
  if (a == b) return 0.0;
  const double whole = detail::gl_panel(f, a, b, rule);
  return detail::adaptive_gl(f, a, b, whole, tol, max_depth, rule);
}

/// Composite Gauss–Legendre nodes on one axis: `panels` equal panels of
/// `order` nodes each.
struct AxisRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline AxisRule composite_rule(double lo, double hi, std::size_t panels, int order) {
  const GaussLegendreRule base = gauss_legendre(order);
  AxisRule r;
  r.nodes.reserve(panels * base.nodes.size());
  r.weights.reserve(panels * base.nodes.size());
  const double width = (hi - lo) / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    const double a = lo + width * static_cast<double>(p);
    const double c = a + 0.5 * width;
    for (std::size_t k = 0; k < base.nodes.size(); ++k) {
      r.nodes.push_back(c + 0.5 * width * base.nodes[k]);
      r.weights.push_back(0.5 * width * base.weights[k]);
    }
  }
  return r;
}

/// Tensor product of per-axis composite rules. Node `k` is stored
/// row-major (last axis fastest).
class QuadratureGrid {
public:
  QuadratureGrid() = default;
  explicit QuadratureGrid(std::vector<AxisRule> axes) : axes_(std::move(axes)) {
    std::size_t total = 1;
    for (const auto& a : axes_) total *= a.nodes.size();
    const std::size_t n = axes_.size();
    points_.resize(total * n);
    weights_.resize(total);
    std::vector<std::size_t> idx(n, 0);
    for (std::size_t k = 0; k < total; ++k) {
      double w = 1.0;
      for (std::size_t d = 0; d < n; ++d) {
        points_[k * n + d] = axes_[d].nodes[idx[d]];
        w *= axes_[d].weights[idx[d]];
      }
      weights_[k] = w;
      for (std::size_t d = n; d-- > 0;) {
        if (++idx[d] < axes_[d].nodes.size()) break;
        idx[d] = 0;
      }
    }
  }

  std::size_t dim() const noexcept { return axes_.size(); }
  std::size_t size() const noexcept { return weights_.size(); }
  const std::vector<AxisRule>& axes() const noexcept { return axes_; }

  /// Coordinates of node k (length dim()).
  const double* point(std::size_t k) const noexcept { return points_.data() + k * dim(); }
  double weight(std::size_t k) const noexcept { return weights_[k]; }

private:
  std::vector<AxisRule> axes_;
  std::vector<double> points_;
  std::vector<double> weights_;
};

}  // namespace charstoch
