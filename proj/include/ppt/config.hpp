#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <compare>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ppt/assignment.hpp"
#include "ppt/error.hpp"

namespace ppt {

/// A location in the carrier space. One coordinate is a time in [0, T].
struct Point {
  std::vector<double> coords;

  Point() = default;
  Point(double t) : coords{t} {}  // NOLINT: times convert implicitly
  Point(std::initializer_list<double> c) : coords(c) {}
  explicit Point(std::vector<double> c) : coords(std::move(c)) {}

  std::size_t dimension() const noexcept { return coords.size(); }
  double operator[](std::size_t i) const { return coords[i]; }

  friend bool operator==(const Point&, const Point&) = default;
  friend auto operator<=>(const Point& a, const Point& b) {
    return std::lexicographical_compare_three_way(a.coords.begin(), a.coords.end(),
                                                  b.coords.begin(), b.coords.end());
  }
};

inline double euclidean(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.coords.size(); ++i) {
    const double d = a.coords[i] - b.coords[i];
    s += d * d;
  }
  return std::sqrt(s);
}

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double length() const noexcept { return hi - lo; }
};

/// Axis-aligned box; closed on every side.
class Window {
 public:
  explicit Window(std::vector<Interval> axes) : axes_(std::move(axes)) {
    if (axes_.empty()) throw Error(Errc::invalid_argument, "Window: no axes");
    for (const auto& a : axes_)
      if (!(a.hi > a.lo) || !std::isfinite(a.lo) || !std::isfinite(a.hi))
        throw Error(Errc::invalid_argument, "Window: empty or non-finite interval");
  }

  /// The time window [0, T].
  static Window horizon(double T) { return Window({Interval{0.0, T}}); }
  static Window interval(double lo, double hi) { return Window({Interval{lo, hi}}); }

  std::size_t dimension() const noexcept { return axes_.size(); }
  const Interval& axis(std::size_t i) const { return axes_[i]; }
  const std::vector<Interval>& axes() const noexcept { return axes_; }

  double volume() const noexcept {
    double v = 1.0;
    for (const auto& a : axes_) v *= a.length();
    return v;
  }

  bool contains(const Point& p) const noexcept {
    if (p.dimension() != axes_.size()) return false;
    for (std::size_t i = 0; i < axes_.size(); ++i)
      if (!(p.coords[i] >= axes_[i].lo && p.coords[i] <= axes_[i].hi)) return false;
    return true;
  }

 private:
  std::vector<Interval> axes_;
};

/// Finite multiset of points, kept in lexicographic order so that equal
/// multisets compare equal and serialize identically.
class Configuration {
 public:
  Configuration() = default;

  explicit Configuration(std::vector<Point> points) : points_(std::move(points)) {
    for (const auto& p : points_) {
      if (p.dimension() != dimension())
        throw Error(Errc::invalid_argument, "Configuration: mixed point dimensions");
      for (double c : p.coords)
        if (!std::isfinite(c))
          throw Error(Errc::invalid_argument, "Configuration: non-finite coordinate");
    }
    std::sort(points_.begin(), points_.end());
  }

  Configuration(std::vector<Point> points, const Window& window)
      : Configuration(std::move(points)) {
    for (const auto& p : points_)
      if (!window.contains(p))
        throw Error(Errc::invalid_argument, "Configuration: point outside window");
  }

  /// Skips the sort; `points` must already be in canonical order (e.g. a
  /// subsequence of another configuration).
  static Configuration from_sorted(std::vector<Point> points) {
    assert(std::is_sorted(points.begin(), points.end()));
    return Configuration(sorted_tag{}, std::move(points));
  }

  /// One-dimensional configuration from event times.
  static Configuration from_times(const std::vector<double>& times) {
    std::vector<Point> pts;
    pts.reserve(times.size());
    for (double t : times) pts.emplace_back(t);
    return Configuration(std::move(pts));
  }

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  std::size_t dimension() const noexcept {
    return points_.empty() ? 0 : points_.front().dimension();
  }
  const std::vector<Point>& points() const noexcept { return points_; }
  auto begin() const noexcept { return points_.begin(); }
  auto end() const noexcept { return points_.end(); }

  /// eta + epsilon_s
  Configuration with_point(const Point& s) const {
    Configuration out;
    out.points_.reserve(points_.size() + 1);
    const auto pos = std::upper_bound(points_.begin(), points_.end(), s);
    out.points_.insert(out.points_.end(), points_.begin(), pos);
    out.points_.push_back(s);
    out.points_.insert(out.points_.end(), pos, points_.end());
    return out;
  }

  friend bool operator==(const Configuration&, const Configuration&) = default;

 private:
  struct sorted_tag {};
  Configuration(sorted_tag, std::vector<Point> pts) : points_(std::move(pts)) {}
  friend Configuration superpose(const Configuration&, const Configuration&);
  friend std::pair<Configuration, Configuration> symmetric_difference(const Configuration&,
                                                                      const Configuration&);

  std::vector<Point> points_;
};

/// Union as measures (multiplicities add).
inline Configuration superpose(const Configuration& a, const Configuration& b) {
  std::vector<Point> out;
  out.reserve(a.size() + b.size());
  std::merge(a.points_.begin(), a.points_.end(), b.points_.begin(), b.points_.end(),
             std::back_inserter(out));
  return Configuration(Configuration::sorted_tag{}, std::move(out));
}

/// (a \ b, b \ a) as multisets.
inline std::pair<Configuration, Configuration> symmetric_difference(const Configuration& a,
                                                                    const Configuration& b) {
  std::vector<Point> left, right;
  std::set_difference(a.points_.begin(), a.points_.end(), b.points_.begin(), b.points_.end(),
                      std::back_inserter(left));
  std::set_difference(b.points_.begin(), b.points_.end(), a.points_.begin(), a.points_.end(),
                      std::back_inserter(right));
  return {Configuration(Configuration::sorted_tag{}, std::move(left)),
          Configuration(Configuration::sorted_tag{}, std::move(right))};
}


enum class GroundMetric { d1, d2 };

struct GroundMetricSpec {
  GroundMetric kind = GroundMetric::d1;
  double d0_truncation = 1.0;  // only read for d2

  static GroundMetricSpec total_variation() { return {GroundMetric::d1, 1.0}; }
  static GroundMetricSpec matching(double truncation = 1.0) {
    if (!(truncation > 0.0))
      throw Error(Errc::invalid_argument, "GroundMetricSpec: d0_truncation must be > 0");
    return {GroundMetric::d2, truncation};
  }
};

/// Total variation between atomic measures: 2 sup_A |a(A) - b(A)|, which for
/// finite configurations is 2 max(|a\b|, |b\a|).
inline double d1_distance(const Configuration& a, const Configuration& b) {
  // Count-only merge; avoids materializing the differences.
  std::size_t only_a = 0, only_b = 0;
  auto ia = a.begin(), ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++only_a;
      ++ia;
    } else if (*ib < *ia) {
      ++only_b;
      ++ib;
    } else {
      ++ia;
      ++ib;
    }
  }
  only_a += static_cast<std::size_t>(a.end() - ia);
  only_b += static_cast<std::size_t>(b.end() - ib);
  return 2.0 * static_cast<double>(std::max(only_a, only_b));
}

/// Square root of the optimal matching cost under d0(x,y) = min(|x-y|, c).
/// Infinite when the cardinalities differ (no coupling exists).
inline double d2_distance(const Configuration& a, const Configuration& b,
                          const GroundMetricSpec& spec) {
  if (spec.kind != GroundMetric::d2)
    throw Error(Errc::invalid_argument, "d2_distance: spec.kind must be d2");
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  if (a.empty()) return 0.0;
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      cost(i, j) = std::min(euclidean(a.points()[i], b.points()[j]), spec.d0_truncation);
  return std::sqrt(assignment_solve(cost).cost);
}

inline double distance(const Configuration& a, const Configuration& b,
                       const GroundMetricSpec& spec) {
  return spec.kind == GroundMetric::d1 ? d1_distance(a, b) : d2_distance(a, b, spec);
}

// JSON: an array of coordinate arrays in canonical order. nlohmann::json
// prints doubles in shortest round-trip form.

inline nlohmann::json to_json_value(const Configuration& c) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : c) arr.push_back(p.coords);
  return arr;
}

inline Configuration configuration_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(Errc::parse_error, "configuration: expected a JSON array");
  std::vector<Point> pts;
  pts.reserve(j.size());
  for (const auto& p : j) {
    if (p.is_number()) {
      pts.emplace_back(p.get<double>());
    } else if (p.is_array()) {
      pts.emplace_back(p.get<std::vector<double>>());
    } else {
      throw Error(Errc::parse_error, "configuration: point must be an array of numbers");
    }
  }
  return Configuration(std::move(pts));
}

inline std::string to_json_string(const Configuration& c) { return to_json_value(c).dump(); }

inline Configuration parse_configuration(const std::string& text) {
  try {
    return configuration_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("configuration: ") + e.what());
  }
}

}  // namespace ppt
