#pragma once

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "ppt/config.hpp"
#include "ppt/ctmc.hpp"
#include "ppt/error.hpp"
#include "ppt/intensity.hpp"
#include "ppt/rng.hpp"

namespace ppt {

/// Poisson(mean) count; mean 0 gives 0 without touching the stream.
inline long poisson_count(double mean, Rng& rng) {
  if (mean <= 0.0) return 0;
  std::poisson_distribution<long> dist(mean);
  return dist(rng);
}

inline Point uniform_point(const Window& window, Rng& rng) {
  std::vector<double> x(window.dimension());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const auto& a = window.axis(k);
    x[k] = a.lo + a.length() * rng.uniform();
  }
  return Point(std::move(x));
}

inline Configuration sample_poisson_homogeneous(double rate, const Window& window, Rng& rng) {
  if (!(rate * window.volume() > 0.0) || !std::isfinite(rate))
    throw Error(Errc::invalid_argument, "sample_poisson_homogeneous: rate * volume must be > 0");
  const long n = poisson_count(rate * window.volume(), rng);
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) pts.push_back(uniform_point(window, rng));
  return Configuration(std::move(pts));
}

/// Thinning of a homogeneous Poisson(M) sample. The dominating points are
/// drawn first, then one acceptance uniform per point, so h = M reproduces
/// the homogeneous sample bit for bit.
inline Configuration sample_poisson_inhomogeneous(const IntensityFunction& h,
                                                  const Window& window, Rng& rng) {
  const double bound = h.sup_bound();
  if (bound == 0.0) return {};
  const auto base = sample_poisson_homogeneous(bound, window, rng);
  std::vector<Point> kept;
  kept.reserve(base.size());
  for (const auto& x : base) {
    const double v = h(x);
    if (v > bound * (1.0 + 1e-12))
      throw Error(Errc::sup_bound_violated, "SupBoundViolated: h(x) = " + std::to_string(v) +
                                                " exceeds bound " + std::to_string(bound));
    if (rng.uniform() * bound < v) kept.push_back(x);
  }
  return Configuration::from_sorted(std::move(kept));
}

/// Samples (Poisson(h_a), Poisson(h_b)) from one dominating process so the
/// two configurations share atoms bitwise wherever both keep a point.
inline std::pair<Configuration, Configuration> sample_poisson_coupled(
    const IntensityFunction& h_a, const IntensityFunction& h_b, const Window& window, Rng& rng) {
  const double bound = std::max(h_a.sup_bound(), h_b.sup_bound());
  if (bound == 0.0) return {};
  const auto base = sample_poisson_homogeneous(bound, window, rng);
  std::vector<Point> a, b;
  for (const auto& x : base) {
    const double va = h_a(x), vb = h_b(x);
    if (va > bound * (1.0 + 1e-12) || vb > bound * (1.0 + 1e-12))
      throw Error(Errc::sup_bound_violated, "SupBoundViolated: intensity exceeds its bound");
    const double u = rng.uniform() * bound;
    if (u < va) a.push_back(x);
    if (u < vb) b.push_back(x);
  }
  return {Configuration::from_sorted(std::move(a)), Configuration::from_sorted(std::move(b))};
}

/// Each atom kept independently with probability keep_prob.
inline Configuration thin_configuration(const Configuration& a, double keep_prob, Rng& rng) {
  if (!(keep_prob >= 0.0 && keep_prob <= 1.0))
    throw Error(Errc::invalid_argument, "thin_configuration: keep_prob must lie in [0, 1]");
  if (keep_prob == 1.0) return a;
  std::vector<Point> kept;
  if (keep_prob > 0.0)
    for (const auto& x : a)
      if (rng.uniform() < keep_prob) kept.push_back(x);
  return Configuration::from_sorted(std::move(kept));
}

struct MmppSample {
  CtmcPath path;
  Configuration points;
};

/// Modulating path first, then a homogeneous Poisson sample of rate
/// rates[J] on every constant segment.
inline MmppSample sample_mmpp(const CtmcModel& model, double T, Rng& rng,
                              InitialState init = InitialState::from_stationary()) {
  auto path = sample_ctmc_path(model, init, T, rng);
  std::vector<Point> pts;
  path.for_each_segment([&](double a, double b, std::size_t s) {
    const long n = poisson_count(model.rates()[s] * (b - a), rng);
    for (long i = 0; i < n; ++i) pts.emplace_back(a + (b - a) * rng.uniform());
  });
  return {std::move(path), Configuration(std::move(pts))};
}

}  // namespace ppt
