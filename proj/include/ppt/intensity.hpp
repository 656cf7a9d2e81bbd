#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ppt/config.hpp"
#include "ppt/error.hpp"

namespace ppt {

struct QuadratureRule {
  std::vector<Point> nodes;
  std::vector<double> weights;
};

/// A nonnegative intensity h on a window, with a bound M >= sup h used by
/// the thinning sampler.
///
/// Three representations are supported. Constant and piecewise-constant
/// (1-D) intensities integrate exactly; a callable intensity integrates by
/// composite 3-point Gauss-Legendre on `n_quad` cells per axis, and has no
/// quadrature at all when n_quad = 0.
class IntensityFunction {
 public:
  enum class Kind { constant, piecewise_constant, callable };

  static IntensityFunction constant(double value) {
    if (!(value >= 0.0) || !std::isfinite(value))
      throw Error(Errc::invalid_argument, "IntensityFunction: constant must be finite and >= 0");
    IntensityFunction h(Kind::constant);
    h.values_ = {value};
    h.sup_ = value;
    return h;
  }

  /// h = values[i] on [breaks[i], breaks[i+1]), zero outside [breaks.front(), breaks.back()].
  static IntensityFunction piecewise_constant(std::vector<double> breaks,
                                              std::vector<double> values) {
    if (breaks.size() != values.size() + 1 || values.empty())
      throw Error(Errc::invalid_argument,
                  "IntensityFunction: need values.size() + 1 breakpoints");
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i)
      if (!(breaks[i + 1] > breaks[i]))
        throw Error(Errc::invalid_argument, "IntensityFunction: breakpoints must increase");
    for (double v : values)
      if (!(v >= 0.0) || !std::isfinite(v))
        throw Error(Errc::invalid_argument, "IntensityFunction: values must be finite and >= 0");
    IntensityFunction h(Kind::piecewise_constant);
    h.sup_ = *std::max_element(values.begin(), values.end());
    h.breaks_ = std::move(breaks);
    h.values_ = std::move(values);
    return h;
  }

  static IntensityFunction callable(std::function<double(const Point&)> fn, double sup_bound,
                                    std::size_t n_quad) {
    if (!fn) throw Error(Errc::invalid_argument, "IntensityFunction: empty callable");
    if (!(sup_bound > 0.0) || !std::isfinite(sup_bound))
      throw Error(Errc::invalid_argument, "IntensityFunction: sup bound must be positive");
    IntensityFunction h(Kind::callable);
    h.fn_ = std::move(fn);
    h.sup_ = sup_bound;
    h.n_quad_ = n_quad;
    return h;
  }

  Kind kind() const noexcept { return kind_; }
  double sup_bound() const noexcept { return sup_; }
  bool has_quadrature() const noexcept { return kind_ != Kind::callable || n_quad_ > 0; }

  double operator()(const Point& x) const {
    switch (kind_) {
      case Kind::constant:
        return values_[0];
      case Kind::piecewise_constant: {
        const double t = x[0];
        if (t < breaks_.front() || t >= breaks_.back()) {
          // The last piece is closed on the right.
          return t == breaks_.back() ? values_.back() : 0.0;
        }
        const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
        return values_[static_cast<std::size_t>(it - breaks_.begin()) - 1];
      }
      case Kind::callable:
        return fn_(x);
    }
    return 0.0;
  }

  /// Nodes and weights integrating any g(h(x)) over the window. Exact for
  /// constant and piecewise-constant h.
  QuadratureRule quadrature(const Window& window) const {
    QuadratureRule rule;
    switch (kind_) {
      case Kind::constant: {
        std::vector<double> mid;
        for (const auto& a : window.axes()) mid.push_back(0.5 * (a.lo + a.hi));
        rule.nodes.emplace_back(std::move(mid));
        rule.weights.push_back(window.volume());
        break;
      }
      case Kind::piecewise_constant: {
        if (window.dimension() != 1)
          throw Error(Errc::invalid_argument,
                      "IntensityFunction: piecewise-constant intensity is one-dimensional");
        const double lo = window.axis(0).lo, hi = window.axis(0).hi;
        std::vector<double> cuts{lo, hi};
        for (double b : breaks_)
          if (b > lo && b < hi) cuts.push_back(b);
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
          rule.nodes.emplace_back(0.5 * (cuts[i] + cuts[i + 1]));
          rule.weights.push_back(cuts[i + 1] - cuts[i]);
        }
        break;
      }
      case Kind::callable: {
        if (n_quad_ == 0)
          throw Error(Errc::quadrature_unavailable,
                      "QuadratureUnavailable: intensity has no quadrature grid");
        static constexpr std::array<double, 3> gl_x{-0.7745966692414834, 0.0,
                                                    0.7745966692414834};
        static constexpr std::array<double, 3> gl_w{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
        // 1-D rules per axis, then tensor product.
        std::vector<std::vector<std::pair<double, double>>> axis_rules;
        for (const auto& a : window.axes()) {
          std::vector<std::pair<double, double>> r;
          const double h = a.length() / static_cast<double>(n_quad_);
          for (std::size_t c = 0; c < n_quad_; ++c) {
            const double mid = a.lo + (static_cast<double>(c) + 0.5) * h;
            for (std::size_t q = 0; q < 3; ++q)
              r.emplace_back(mid + 0.5 * h * gl_x[q], 0.5 * h * gl_w[q]);
          }
          axis_rules.push_back(std::move(r));
        }
        const std::size_t d = axis_rules.size();
        std::vector<std::size_t> idx(d, 0);
        while (true) {
          std::vector<double> x(d);
          double w = 1.0;
          for (std::size_t k = 0; k < d; ++k) {
            x[k] = axis_rules[k][idx[k]].first;
            w *= axis_rules[k][idx[k]].second;
          }
          rule.nodes.emplace_back(std::move(x));
          rule.weights.push_back(w);
          std::size_t k = 0;
          while (k < d && ++idx[k] == axis_rules[k].size()) idx[k++] = 0;
          if (k == d) break;
        }
        break;
      }
    }
    return rule;
  }

  /// Integral over the window of g(h(x)) dx.
  template <class G>
  double integrate(const Window& window, G&& g) const {
    const auto rule = quadrature(window);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
      s += rule.weights[i] * g((*this)(rule.nodes[i]));
    return s;
  }

  /// Spot-checks 0 <= h <= M on the quadrature grid (or pieces).
  void check(const Window& window) const {
    if (!has_quadrature()) return;
    const auto rule = quadrature(window);
    for (const auto& x : rule.nodes) {
      const double v = (*this)(x);
      if (!(v >= 0.0))
        throw Error(Errc::invalid_argument, "IntensityFunction: negative intensity on the window");
      if (v > sup_ * (1.0 + 1e-12))
        throw Error(Errc::sup_bound_violated,
                    "SupBoundViolated: h = " + std::to_string(v) + " exceeds bound " +
                        std::to_string(sup_));
    }
  }

  const std::vector<double>& breaks() const noexcept { return breaks_; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  explicit IntensityFunction(Kind k) : kind_(k) {}

  Kind kind_;
  double sup_ = 0.0;
  std::vector<double> breaks_;
  std::vector<double> values_;
  std::function<double(const Point&)> fn_;
  std::size_t n_quad_ = 0;
};

}  // namespace ppt
