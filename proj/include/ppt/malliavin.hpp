#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "ppt/config.hpp"
#include "ppt/engine.hpp"
#include "ppt/error.hpp"
#include "ppt/intensity.hpp"
#include "ppt/rng.hpp"
#include "ppt/sample.hpp"
#include "ppt/stats.hpp"

namespace ppt {

// ---------------------------------------------------------------------------
// Carriers. A carrier knows how to thin a state, draw a fresh Poisson sample
// of a fraction of the reference measure, and superpose two states. The
// Ornstein-Uhlenbeck semigroup is realized on any carrier as
//   P_t F(w) = E[ F( thin(w, e^{-t}) + fresh((1 - e^{-t}) rho) ) ].

template <class C>
concept PoissonCarrier = requires(const C& c, const typename C::state_type& w, double x, Rng& rng) {
  { c.thin(w, x, rng) } -> std::same_as<typename C::state_type>;
  { c.fresh(x, rng) } -> std::same_as<typename C::state_type>;
  { c.superpose(w, w) } -> std::same_as<typename C::state_type>;
};

/// rho = rate * Lebesgue on a window.
struct ContinuousCarrier {
  using state_type = Configuration;

  Window window;
  double rate = 1.0;

  Configuration thin(const Configuration& w, double keep, Rng& rng) const {
    return thin_configuration(w, keep, rng);
  }
  Configuration fresh(double fraction, Rng& rng) const {
    if (fraction <= 0.0) return {};
    return sample_poisson_homogeneous(rate * fraction, window, rng);
  }
  Configuration superpose(const Configuration& a, const Configuration& b) const {
    return ppt::superpose(a, b);
  }
  Configuration sample_reference(Rng& rng) const { return fresh(1.0, rng); }
};

/// rho = sum_i weights[i] delta_{atom i}; states are count vectors.
struct AtomCarrier {
  using state_type = CountVector;

  std::vector<double> weights;

  explicit AtomCarrier(std::vector<double> w) : weights(std::move(w)) {}
  explicit AtomCarrier(const FiniteCarrierModel& model) : weights(model.weights()) {}

  CountVector thin(const CountVector& w, double keep, Rng& rng) const {
    if (keep >= 1.0) return w;
    CountVector out(w.size(), 0);
    if (keep <= 0.0) return out;
    for (std::size_t i = 0; i < w.size(); ++i) {
      std::binomial_distribution<int> dist(w[i], keep);
      out[i] = dist(rng);
    }
    return out;
  }
  CountVector fresh(double fraction, Rng& rng) const {
    CountVector out(weights.size(), 0);
    for (std::size_t i = 0; i < weights.size(); ++i)
      out[i] = static_cast<int>(poisson_count(fraction * weights[i], rng));
    return out;
  }
  CountVector superpose(const CountVector& a, const CountVector& b) const {
    CountVector out(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
  }
  CountVector sample_reference(Rng& rng) const { return fresh(1.0, rng); }
};

/// One draw of the OU dynamics started at w and run for time t.
template <PoissonCarrier C>
typename C::state_type ou_step(const C& carrier, const typename C::state_type& w, double t,
                               Rng& rng) {
  const double keep = std::exp(-t);
  auto survivors = carrier.thin(w, keep, rng);
  return carrier.superpose(survivors, carrier.fresh(1.0 - keep, rng));
}

/// Estimate of P_t F(w) from n independent OU draws.
template <PoissonCarrier C, class F>
Estimate ou_semigroup_mc(F&& f, const typename C::state_type& w, double t, const C& carrier,
                         std::size_t n_samples, Rng& rng) {
  if (!(t >= 0.0)) throw Error(Errc::invalid_argument, "ou_semigroup_mc: t must be >= 0");
  if (n_samples == 0) throw Error(Errc::invalid_argument, "ou_semigroup_mc: need samples");
  RunningStats stats;
  for (std::size_t i = 0; i < n_samples; ++i) stats.add(f(ou_step(carrier, w, t, rng)));
  return stats.estimate();
}

/// Estimate of (Id + L)^{-1} F(w) = int_0^inf e^{-t} P_t F(w) dt, drawing
/// the time from Exp(1) so each sample is a single OU evaluation.
template <PoissonCarrier C, class F>
Estimate resolvent_mc(F&& f, const typename C::state_type& w, const C& carrier,
                      std::size_t n_samples, Rng& rng) {
  if (n_samples == 0) throw Error(Errc::invalid_argument, "resolvent_mc: need samples");
  RunningStats stats;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double tau = rng.exponential(1.0);
    stats.add(f(ou_step(carrier, w, tau, rng)));
  }
  return stats.estimate();
}

// ---------------------------------------------------------------------------
// Gradient and density.

inline Configuration add_point(const Configuration& w, const Point& s) { return w.with_point(s); }

inline CountVector add_point(const CountVector& w, std::size_t atom) {
  CountVector out(w);
  ++out.at(atom);
  return out;
}

/// F(w + eps_s) - F(w).
template <class F, class State, class Site>
double discrete_gradient(F&& f, const State& w, const Site& s) {
  return f(add_point(w, s)) - f(w);
}

/// Density of Poisson(h ds) against Poisson(ref_rate ds) on a window:
///   L(w) = exp( sum_{x in w} ln(h(x) / ref_rate) - int (h - ref_rate) ds ).
/// The integral is computed once at construction.
class GirsanovDensity {
 public:
  GirsanovDensity(IntensityFunction h, double ref_rate, const Window& window)
      : h_(std::move(h)), ref_rate_(ref_rate) {
    if (!(ref_rate_ > 0.0)) throw Error(Errc::invalid_argument, "girsanov: ref_rate must be > 0");
    compensator_ = h_.integrate(window, [r = ref_rate_](double v) { return v - r; });
  }

  double operator()(const Configuration& w) const {
    double log_l = -compensator_;
    for (const auto& x : w) {
      const double v = h_(x);
      if (v <= 0.0) return 0.0;
      log_l += std::log(v / ref_rate_);
    }
    return std::exp(log_l);
  }

  const IntensityFunction& intensity() const noexcept { return h_; }
  double ref_rate() const noexcept { return ref_rate_; }
  double compensator() const noexcept { return compensator_; }

 private:
  IntensityFunction h_;
  double ref_rate_;
  double compensator_ = 0.0;
};

inline double girsanov_density(const Configuration& w, const IntensityFunction& h,
                               double ref_rate, const Window& window) {
  return GirsanovDensity(h, ref_rate, window)(w);
}

}  // namespace ppt
