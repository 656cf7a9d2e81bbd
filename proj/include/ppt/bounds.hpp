#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/tools/minima.hpp>
#include <json.hpp>

#include "ppt/ctmc.hpp"
#include "ppt/engine.hpp"
#include "ppt/error.hpp"
#include "ppt/intensity.hpp"
#include "ppt/malliavin.hpp"
#include "ppt/parallel.hpp"
#include "ppt/rng.hpp"
#include "ppt/stats.hpp"

namespace ppt {

/// Which first factor the closed-form bounds use.
///   paper:   integral of |h|        (gradient of L taken as h(s) L)
///   derived: integral of |h - ref|  (gradient of L computed by definition)
enum class Variant { paper, derived };

inline const char* to_string(Variant v) noexcept {
  return v == Variant::paper ? "paper" : "derived";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "paper") return Variant::paper;
  if (s == "derived") return Variant::derived;
  throw Error(Errc::invalid_argument, "unknown variant '" + s + "' (expected paper|derived)");
}

/// One evaluated bound. Deterministic reports satisfy
/// value = C * l1_term * exp(exponent / 2); Monte Carlo reports carry the
/// sample means of both factors and a standard error on value.
struct BoundReport {
  Variant variant = Variant::derived;
  double C = 1.0;
  double l1_term = 0.0;
  double exponent = 0.0;
  double value = 0.0;
  std::optional<double> std_error;
  std::optional<std::size_t> n_samples;
};

inline nlohmann::json to_json_value(const BoundReport& r) {
  nlohmann::json j{{"variant", to_string(r.variant)}, {"C", r.C},
                   {"l1_term", r.l1_term},            {"exponent", r.exponent},
                   {"value", r.value}};
  j["std_error"] = r.std_error ? nlohmann::json(*r.std_error) : nlohmann::json(nullptr);
  j["n_samples"] = r.n_samples ? nlohmann::json(*r.n_samples) : nlohmann::json(nullptr);
  return j;
}

namespace detail {
inline void check_constant(double C) {
  if (!(C > 0.0) || !std::isfinite(C))
    throw Error(Errc::invalid_argument, "bound constant C must be positive");
}
}  // namespace detail

/// C * l1 * exp(exponent / 2) for Poisson(ref_rate ds) against Poisson(h ds).
/// The exponent is int (h - ref)^2 / ref ds, i.e. the squared L2(rho) norm
/// of h/ref - 1 with rho = ref_rate ds.
inline BoundReport poisson_bound_closed_form(const IntensityFunction& h, const Window& window,
                                             double ref_rate, Variant variant, double C = 1.0) {
  detail::check_constant(C);
  if (!(ref_rate > 0.0)) throw Error(Errc::invalid_argument, "ref_rate must be > 0");
  h.check(window);
  BoundReport r;
  r.variant = variant;
  r.C = C;
  r.l1_term = variant == Variant::paper
                  ? h.integrate(window, [](double v) { return std::abs(v); })
                  : h.integrate(window, [ref_rate](double v) { return std::abs(v - ref_rate); });
  r.exponent = h.integrate(window, [ref_rate](double v) {
    const double d = v - ref_rate;
    return d * d / ref_rate;
  });
  r.value = C * r.l1_term * std::exp(0.5 * r.exponent);
  return r;
}

/// Same bound on a finite carrier: nu has weights h_i rho_i, mu has rho_i.
inline BoundReport poisson_bound_closed_form(const FiniteCarrierModel& model,
                                             std::span<const double> h, Variant variant,
                                             double C = 1.0) {
  detail::check_constant(C);
  if (h.size() != model.atoms())
    throw Error(Errc::invalid_argument, "poisson_bound_closed_form: one h per atom");
  BoundReport r;
  r.variant = variant;
  r.C = C;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double rho = model.weight(i);
    r.l1_term += rho * (variant == Variant::paper ? std::abs(h[i]) : std::abs(h[i] - 1.0));
    r.exponent += rho * (h[i] - 1.0) * (h[i] - 1.0);
  }
  r.value = C * r.l1_term * std::exp(0.5 * r.exponent);
  return r;
}

/// C * E_mu sum_i rho_i |(Id + L)^{-1} grad_i L| on the exact engine, with
/// the gradient of the density evaluated by definition (L(k + e_i) - L(k)),
/// the resolvent by a sparse direct solve and the expectation by summation
/// against the truncated reference law.
inline BoundReport resolvent_bound_exact(const Engine& engine, std::span<const double> h,
                                         double C = 1.0) {
  detail::check_constant(C);
  const auto& model = engine.model();
  if (h.size() != model.atoms())
    throw Error(Errc::invalid_argument, "resolvent_bound: one h per atom");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.state_count()));
  for (std::size_t i = 0; i < model.atoms(); ++i) {
    const auto grad = engine.tabulate([&](const CountVector& k) {
      return discrete_gradient([&](const CountVector& w) { return girsanov_density(w, model, h); },
                               k, i);
    });
    acc += model.weight(i) * engine.resolvent_values(grad.values()).cwiseAbs();
  }
  BoundReport r;
  r.variant = Variant::derived;
  r.C = C;
  r.l1_term = engine.reference_law().dot(acc);
  r.value = C * r.l1_term;
  return r;
}

/// Monte Carlo version on a finite carrier. Outer samples w ~ mu (untruncated
/// product Poisson); for each, n_inner resolvent draws estimate
/// (Id + L)^{-1} grad_i L(w) for every atom at once.
inline BoundReport resolvent_bound_mc(const FiniteCarrierModel& model, std::span<const double> h,
                                      std::size_t n_outer, Rng& rng, double C = 1.0,
                                      std::size_t n_inner = 1) {
  detail::check_constant(C);
  if (n_outer == 0 || n_inner == 0)
    throw Error(Errc::invalid_argument, "resolvent_bound_mc: sample counts must be >= 1");
  const AtomCarrier carrier(model);
  const std::vector<double> hv(h.begin(), h.end());
  auto density = [&](const CountVector& w) { return girsanov_density(w, model, hv); };
  RunningStats outer;
  std::vector<double> inner(model.atoms());
  for (std::size_t o = 0; o < n_outer; ++o) {
    const auto w = carrier.sample_reference(rng);
    std::fill(inner.begin(), inner.end(), 0.0);
    for (std::size_t r = 0; r < n_inner; ++r) {
      const auto x = ou_step(carrier, w, rng.exponential(1.0), rng);
      for (std::size_t i = 0; i < model.atoms(); ++i) inner[i] += discrete_gradient(density, x, i);
    }
    double v = 0.0;
    for (std::size_t i = 0; i < model.atoms(); ++i)
      v += model.weight(i) * std::abs(inner[i] / static_cast<double>(n_inner));
    outer.add(v);
  }
  BoundReport rep;
  rep.variant = Variant::derived;
  rep.C = C;
  rep.l1_term = outer.mean();
  rep.value = C * outer.mean();
  rep.std_error = C * outer.std_error();
  rep.n_samples = n_outer;
  return rep;
}

/// Monte Carlo version on a window with reference Poisson(ref_rate ds). The
/// integral over s uses the intensity's quadrature rule.
inline BoundReport resolvent_bound_mc(const IntensityFunction& h, const Window& window,
                                      double ref_rate, std::size_t n_outer, Rng& rng,
                                      double C = 1.0, std::size_t n_inner = 1) {
  detail::check_constant(C);
  if (n_outer == 0 || n_inner == 0)
    throw Error(Errc::invalid_argument, "resolvent_bound_mc: sample counts must be >= 1");
  const GirsanovDensity density(h, ref_rate, window);
  const ContinuousCarrier carrier{window, ref_rate};
  const auto rule = h.quadrature(window);
  RunningStats outer;
  std::vector<double> inner(rule.nodes.size());
  for (std::size_t o = 0; o < n_outer; ++o) {
    const auto w = carrier.sample_reference(rng);
    std::fill(inner.begin(), inner.end(), 0.0);
    for (std::size_t r = 0; r < n_inner; ++r) {
      const auto x = ou_step(carrier, w, rng.exponential(1.0), rng);
      for (std::size_t q = 0; q < rule.nodes.size(); ++q)
        inner[q] += discrete_gradient(density, x, rule.nodes[q]);
    }
    double v = 0.0;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q)
      v += rule.weights[q] * ref_rate * std::abs(inner[q] / static_cast<double>(n_inner));
    outer.add(v);
  }
  BoundReport rep;
  rep.variant = Variant::derived;
  rep.C = C;
  rep.l1_term = outer.mean();
  rep.value = C * outer.mean();
  rep.std_error = C * outer.std_error();
  rep.n_samples = n_outer;
  return rep;
}

// ---------------------------------------------------------------------------
// MMPP against Poisson(lambda).

/// Occupation times of n simulated modulating paths on [0, T]. Given these,
/// the per-path bound is a closed form in lambda, so one path set serves
/// every lambda (common random numbers). Path p uses substream p of `seed`.
class MmppPathSet {
 public:
  MmppPathSet(const CtmcModel& model, double T, std::size_t n_paths, std::uint64_t seed,
              InitialState init = InitialState::from_stationary())
      : rates_(model.rates()), horizon_(T), occupation_(n_paths) {
    if (!(T > 0.0)) throw Error(Errc::invalid_argument, "MmppPathSet: T must be > 0");
    if (n_paths == 0) throw Error(Errc::invalid_argument, "MmppPathSet: need at least one path");
    const Rng root(seed);
    parallel_for(n_paths, [&](std::size_t p) {
      Rng rng = root.split(p);
      occupation_[p] = occupation_times(sample_ctmc_path(model, init, T, rng), model.states());
    });
  }

  std::size_t size() const noexcept { return occupation_.size(); }
  double horizon() const noexcept { return horizon_; }
  const std::vector<double>& occupation(std::size_t p) const { return occupation_[p]; }

  PathIntegrals integrals(std::size_t p) const {
    PathIntegrals out;
    for (std::size_t i = 0; i < rates_.size(); ++i) {
      out.s1 += occupation_[p][i] * rates_[i];
      out.s2 += occupation_[p][i] * rates_[i] * rates_[i];
    }
    return out;
  }

  /// Phi_T(lambda) = int |Psi/lambda - 1|^2 lambda ds = S2/lambda - 2 S1 + lambda T.
  /// Summed per state to avoid cancellation.
  double phi(std::size_t p, double lambda) const {
    double s = 0.0;
    for (std::size_t i = 0; i < rates_.size(); ++i) {
      const double d = rates_[i] - lambda;
      s += occupation_[p][i] * d * d;
    }
    return s / lambda;
  }

  /// paper: int Psi ds = S1; derived: int |Psi - lambda| ds.
  double first_factor(std::size_t p, double lambda, Variant v) const {
    double s = 0.0;
    for (std::size_t i = 0; i < rates_.size(); ++i)
      s += occupation_[p][i] * (v == Variant::paper ? rates_[i] : std::abs(rates_[i] - lambda));
    return s;
  }

  double per_path_bound(std::size_t p, double lambda, Variant v) const {
    return first_factor(p, lambda, v) * std::exp(0.5 * phi(p, lambda));
  }

  /// log of the sample mean of the per-path bound (log-sum-exp; -inf if all zero).
  double log_mean_bound(double lambda, Variant v) const {
    double top = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(size());
    for (std::size_t p = 0; p < size(); ++p) {
      const double a = first_factor(p, lambda, v);
      logs[p] = a > 0.0 ? std::log(a) + 0.5 * phi(p, lambda)
                        : -std::numeric_limits<double>::infinity();
      top = std::max(top, logs[p]);
    }
    if (!std::isfinite(top)) return top;
    double s = 0.0;
    for (double l : logs) s += std::exp(l - top);
    return top + std::log(s / static_cast<double>(size()));
  }

 private:
  std::vector<double> rates_;
  double horizon_;
  std::vector<std::vector<double>> occupation_;
};

inline BoundReport mmpp_bound(const MmppPathSet& paths, double lambda, Variant variant,
                              double C = 1.0) {
  detail::check_constant(C);
  if (!(lambda > 0.0)) throw Error(Errc::invalid_argument, "mmpp_bound: lambda must be > 0");
  RunningStats value, first, expo;
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const double a = paths.first_factor(p, lambda, variant);
    const double phi = paths.phi(p, lambda);
    value.add(a * std::exp(0.5 * phi));
    first.add(a);
    expo.add(phi);
  }
  BoundReport r;
  r.variant = variant;
  r.C = C;
  r.l1_term = first.mean();
  r.exponent = expo.mean();
  r.value = C * value.mean();
  r.std_error = C * value.std_error();
  r.n_samples = paths.size();
  return r;
}

/// E[ A exp(Phi_T(lambda) / 2) ] over n_paths simulated modulating paths.
inline BoundReport mmpp_bound_mc(const CtmcModel& model, double lambda, double T, Variant variant,
                                 std::size_t n_paths, std::uint64_t seed, double C = 1.0,
                                 InitialState init = InitialState::from_stationary()) {
  return mmpp_bound(MmppPathSet(model, T, n_paths, seed, init), lambda, variant, C);
}

inline double mean_rate(const CtmcModel& model) {
  double s = 0.0;
  for (std::size_t i = 0; i < model.states(); ++i) s += model.rates()[i] * model.stationary()[i];
  return s;
}

inline double second_moment_rate(const CtmcModel& model) {
  double s = 0.0;
  for (std::size_t i = 0; i < model.states(); ++i)
    s += model.rates()[i] * model.rates()[i] * model.stationary()[i];
  return s;
}

inline double variance_rate(const CtmcModel& model) {
  const double m = mean_rate(model);
  double s = 0.0;
  for (std::size_t i = 0; i < model.states(); ++i) {
    const double d = model.rates()[i] - m;
    s += d * d * model.stationary()[i];
  }
  return s;
}

inline double burstiness(const CtmcModel& model) {
  const double m = mean_rate(model);
  if (m == 0.0) throw Error(Errc::zero_mean_rate, "ZeroMeanRate: burstiness undefined");
  return variance_rate(model) / m;
}

/// Per-unit-time limit of Phi_T: lambda * sum_i |lambda_i/lambda - 1|^2 pi_i.
inline double asymptotic_objective(const CtmcModel& model, double lambda) {
  if (!(lambda > 0.0))
    throw Error(Errc::invalid_argument, "asymptotic_objective: lambda must be > 0");
  double s = 0.0;
  for (std::size_t i = 0; i < model.states(); ++i) {
    const double d = model.rates()[i] / lambda - 1.0;
    s += d * d * model.stationary()[i];
  }
  return lambda * s;
}

/// mean_rate * T * exp(burstiness * T / 2).
inline double asymptotic_bound(const CtmcModel& model, double T) {
  return mean_rate(model) * T * std::exp(0.5 * burstiness(model) * T);
}

struct LambdaCandidate {
  double lambda = 0.0;
  double objective = 0.0;
};

struct OptimizeReport {
  std::string mode;
  std::optional<Variant> variant;  // finite-horizon mode only
  LambdaCandidate argmin;
  LambdaCandidate mean_rate;
  LambdaCandidate sqrt_second_moment;
};

inline nlohmann::json to_json_value(const OptimizeReport& r) {
  auto cand = [](const LambdaCandidate& c) {
    return nlohmann::json{{"lambda", c.lambda}, {"objective", c.objective}};
  };
  nlohmann::json j{{"mode", r.mode},
                   {"argmin", r.argmin.lambda},
                   {"value", r.argmin.objective},
                   {"candidates",
                    {{"argmin", cand(r.argmin)},
                     {"mean_rate", cand(r.mean_rate)},
                     {"sqrt_second_moment", cand(r.sqrt_second_moment)}}}};
  j["variant"] = r.variant ? nlohmann::json(to_string(*r.variant)) : nlohmann::json(nullptr);
  return j;
}

struct FiniteHorizonObjective {
  std::size_t n_paths = 10000;
  std::uint64_t seed = 0;
  Variant variant = Variant::derived;
  InitialState init = InitialState::from_stationary();
};

namespace detail {

inline std::pair<double, double> lambda_bracket(const CtmcModel& model) {
  const auto& r = model.rates();
  const double lo = *std::min_element(r.begin(), r.end());
  const double hi = *std::max_element(r.begin(), r.end());
  if (!(hi > 0.0))
    throw Error(Errc::invalid_argument, "optimize_lambda: rates are all zero");
  // The minimizer of a/lambda + b*lambda lies between the extreme rates.
  const double a = lo > 0.0 ? 0.9 * lo : 1e-6 * hi;
  return {a, 1.1 * hi};
}

template <class F>
LambdaCandidate minimize(F&& f, double lo, double hi) {
  constexpr int bits = std::numeric_limits<double>::digits / 2;
  std::uintmax_t max_iter = 500;
  const auto [x, fx] = boost::math::tools::brent_find_minima(f, lo, hi, bits, max_iter);
  return {x, fx};
}

}  // namespace detail

/// Minimizes the asymptotic objective over lambda and evaluates the two
/// closed-form candidates next to the numeric argmin.
inline OptimizeReport optimize_lambda(const CtmcModel& model, double T) {
  if (!(T > 0.0)) throw Error(Errc::invalid_argument, "optimize_lambda: T must be > 0");
  const auto [lo, hi] = detail::lambda_bracket(model);
  auto f = [&](double l) { return asymptotic_objective(model, l); };
  OptimizeReport r;
  r.mode = "asymptotic";
  r.argmin = detail::minimize(f, lo, hi);
  const double lm = mean_rate(model), ls = std::sqrt(second_moment_rate(model));
  r.mean_rate = {lm, f(lm)};
  r.sqrt_second_moment = {ls, f(ls)};
  return r;
}

/// Minimizes the finite-horizon Monte Carlo bound E[A exp(Phi_T/2)] using a
/// single path set for every lambda. Objective values are that expectation.
inline OptimizeReport optimize_lambda(const CtmcModel& model, double T,
                                      const FiniteHorizonObjective& opt) {
  const auto [lo, hi] = detail::lambda_bracket(model);
  const MmppPathSet paths(model, T, opt.n_paths, opt.seed, opt.init);
  auto log_f = [&](double l) { return paths.log_mean_bound(l, opt.variant); };
  OptimizeReport r;
  r.mode = "finite_T_mc";
  r.variant = opt.variant;
  const auto best = detail::minimize(log_f, lo, hi);
  r.argmin = {best.lambda, std::exp(best.objective)};
  const double lm = mean_rate(model), ls = std::sqrt(second_moment_rate(model));
  r.mean_rate = {lm, std::exp(log_f(lm))};
  r.sqrt_second_moment = {ls, std::exp(log_f(ls))};
  return r;
}

}  // namespace ppt
