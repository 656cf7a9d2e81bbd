#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppt/bounds.hpp"
#include "ppt/engine.hpp"
#include "ppt/error.hpp"
#include "ppt/malliavin.hpp"
#include "ppt/rng.hpp"
#include "ppt/transport.hpp"

namespace ppt {

enum class SuiteStatus { pass, fail, skipped };

inline const char* to_string(SuiteStatus s) noexcept {
  switch (s) {
    case SuiteStatus::pass: return "pass";
    case SuiteStatus::fail: return "fail";
    default: return "skipped";
  }
}

struct SuiteResult {
  std::string name;
  SuiteStatus status = SuiteStatus::skipped;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::string note;
  nlohmann::json detail = nlohmann::json::object();
};

struct ValidationOptions {
  std::uint64_t seed = 1;
  std::size_t n_functionals = 20;
  std::vector<double> times{0.1, 1.0, 5.0};
  double commutation_tolerance = 1e-8;
  std::size_t mc_samples = 20000;
  std::size_t mc_points = 3;
  std::size_t n_densities = 10;
  double h_lo = 0.5;
  double h_hi = 1.5;
  double rademacher_constant = 2.0;  // Lipschitz gradient bound for d1
  std::size_t max_transport_states = 2000;
  double girsanov_tolerance = 1e-10;
};

struct ValidationReport {
  std::vector<SuiteResult> suites;
  std::vector<ChaosEntry> chaos_residuals;

  bool ok() const {
    return std::none_of(suites.begin(), suites.end(),
                        [](const SuiteResult& s) { return s.status == SuiteStatus::fail; });
  }
};

inline nlohmann::json to_json_value(const ValidationReport& r) {
  nlohmann::json suites = nlohmann::json::array();
  for (const auto& s : r.suites) {
    nlohmann::json j{{"name", s.name},           {"status", to_string(s.status)},
                     {"max_error", s.max_error}, {"tolerance", s.tolerance},
                     {"note", s.note},           {"detail", s.detail}};
    suites.push_back(std::move(j));
  }
  return {{"ok", r.ok()}, {"suites", std::move(suites)}};
}

inline void write_residuals_csv(std::ostream& os, const ValidationReport& r) {
  os.precision(17);
  os << "orders,eigenvalue,residual\n";
  for (const auto& e : r.chaos_residuals) {
    std::string tag;
    for (int o : e.orders) tag += (tag.empty() ? "" : ";") + std::to_string(o);
    os << tag << ',' << e.eigenvalue << ',' << e.residual << '\n';
  }
}

namespace detail {

inline int interior_margin(const FiniteCarrierModel& model) { return model.truncation() / 2; }

inline SuiteResult failed(std::string name, const std::exception& e) {
  SuiteResult s;
  s.name = std::move(name);
  s.status = SuiteStatus::fail;
  s.note = e.what();
  return s;
}

inline std::vector<double> random_h(std::size_t m, double lo, double hi, Rng& rng) {
  std::vector<double> h(m);
  for (auto& v : h) v = lo + (hi - lo) * rng.uniform();
  return h;
}

/// Smooth bounded functional defined on all count vectors, so it can be
/// evaluated off the grid by the Monte Carlo resolvent.
struct WaveFunctional {
  std::vector<double> freq, phase;
  double operator()(std::span<const int> k) const {
    double v = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) v += std::cos(freq[i] * k[i] + phase[i]);
    return v / static_cast<double>(k.size());
  }
};

}  // namespace detail

/// Charlier products must be generator eigenfunctions and decay as
/// e^{-t n} under the semigroup.
inline SuiteResult validate_chaos(const Engine& engine, const ValidationOptions& opt,
                                  std::vector<ChaosEntry>* residuals = nullptr) {
  SuiteResult s;
  s.name = "chaos_eigencheck";
  const auto& model = engine.model();
  if (model.atoms() > 3 || model.truncation() < 40) {
    s.note = "needs m <= 3 and K >= 40";
    return s;
  }
  ChaosCheckOptions copt;
  s.tolerance = copt.tolerance;
  try {
    const auto rep = chaos_eigencheck(engine, copt);
    if (residuals) *residuals = rep.entries;
    s.max_error = rep.max_residual;
    double worst_decay = 0.0;
    for (const auto& e : rep.entries) {
      const auto c = chaos_table(model, e.orders);
      for (double t : opt.times) {
        const Eigen::VectorXd pc = engine.semigroup_values(c.values(), t);
        worst_decay = std::max(worst_decay,
                               interior_relative_gap(model, pc, std::exp(-t * e.eigenvalue) * c.values(),
                                                     c.values(), copt.margin));
      }
    }
    s.detail = {{"max_eigen_residual", rep.max_residual},
                {"max_semigroup_error", worst_decay},
                {"semigroup_tolerance", 1e-7},
                {"chaoses", rep.entries.size()}};
    s.status = worst_decay < 1e-7 ? SuiteStatus::pass : SuiteStatus::fail;
  } catch (const Error& e) {
    auto f = detail::failed(s.name, e);
    f.tolerance = s.tolerance;
    return f;
  }
  return s;
}

/// grad_i P_t F = e^{-t} P_t grad_i F on interior states for random F.
inline SuiteResult validate_commutation(const Engine& engine, const ValidationOptions& opt) {
  SuiteResult s;
  s.name = "commutation";
  s.tolerance = opt.commutation_tolerance;
  const auto& model = engine.model();
  const int margin = detail::interior_margin(model);
  Rng rng = Rng(opt.seed).split(1);
  for (std::size_t f = 0; f < opt.n_functionals; ++f) {
    Eigen::VectorXd values(static_cast<Eigen::Index>(model.state_count()));
    for (Eigen::Index i = 0; i < values.size(); ++i) values(i) = 2.0 * rng.uniform() - 1.0;
    const auto F = engine.table(values);
    for (double t : opt.times) {
      const auto pf = engine.semigroup(F, t);
      for (std::size_t a = 0; a < model.atoms(); ++a) {
        const auto lhs = engine.gradient(pf, a);
        const auto rhs = engine.semigroup(engine.gradient(F, a), t);
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(values.size());
        s.max_error = std::max(s.max_error, interior_relative_gap(model, lhs.values(),
                                                                  std::exp(-t) * rhs.values(), ones,
                                                                  margin));
      }
    }
  }
  s.detail = {{"functionals", opt.n_functionals}, {"times", opt.times}, {"margin", margin}};
  s.status = s.max_error < s.tolerance ? SuiteStatus::pass : SuiteStatus::fail;
  return s;
}

/// Monte Carlo resolvent (exponential time randomization of the OU
/// dynamics, untruncated) against the sparse solve, at a few interior states.
inline SuiteResult validate_resolvent_mc(const Engine& engine, const ValidationOptions& opt) {
  SuiteResult s;
  s.name = "resolvent_mc";
  s.tolerance = 3.0;  // in standard errors
  const auto& model = engine.model();
  Rng rng = Rng(opt.seed).split(2);
  detail::WaveFunctional wave;
  for (std::size_t i = 0; i < model.atoms(); ++i) {
    wave.freq.push_back(0.2 + 0.6 * rng.uniform());
    wave.phase.push_back(6.283185307179586 * rng.uniform());
  }
  const auto exact = engine.resolvent(engine.tabulate(wave));
  const AtomCarrier carrier(model);
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t p = 0; p < opt.mc_points; ++p) {
    CountVector w(model.atoms());
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = static_cast<int>(std::floor(model.weight(i))) + static_cast<int>(p);
    if (!model.in_range(w)) break;
    Rng sub = rng.split(p);
    const auto est = resolvent_mc(wave, w, carrier, opt.mc_samples, sub);
    const double ref = exact(w);
    const double z = est.std_error > 0.0 ? std::abs(est.mean - ref) / est.std_error
                                         : (est.mean == ref ? 0.0 : INFINITY);
    s.max_error = std::max(s.max_error, z);
    points.push_back({{"state", w}, {"exact", ref}, {"mc", est.mean}, {"se", est.std_error}, {"z", z}});
  }
  s.detail = {{"samples", opt.mc_samples}, {"points", points}};
  s.status = s.max_error <= s.tolerance ? SuiteStatus::pass : SuiteStatus::fail;
  return s;
}

/// E_mu[L] = 1 and E_mu[L^2] = exp(sum rho_i (h_i - 1)^2) on the grid.
inline SuiteResult validate_girsanov(const Engine& engine, const ValidationOptions& opt) {
  SuiteResult s;
  s.name = "girsanov_normalization";
  s.tolerance = opt.girsanov_tolerance;
  const auto& model = engine.model();
  Rng rng = Rng(opt.seed).split(3);
  double allowance = 0.0;
  for (std::size_t r = 0; r < opt.n_densities; ++r) {
    const auto h = detail::random_h(model.atoms(), opt.h_lo, opt.h_hi, rng);
    const auto L = girsanov_table(model, h);
    // Mass the tilted laws put beyond the grid bounds how far the truncated
    // moments can be from the untruncated identities.
    std::vector<double> tilted(model.atoms());
    for (std::size_t i = 0; i < h.size(); ++i)
      tilted[i] = model.weight(i) * std::max({1.0, h[i], h[i] * h[i]});
    allowance = std::max(allowance, 4.0 * truncation_tail_mass(FiniteCarrierModel(tilted, model.truncation())));
    double chi = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) chi += model.weight(i) * (h[i] - 1.0) * (h[i] - 1.0);
    const double m1 = engine.expectation(L);
    const double m2 = engine.reference_law().dot(L.values().cwiseAbs2());
    s.max_error = std::max({s.max_error, std::abs(m1 - 1.0), std::abs(m2 - std::exp(chi)) / std::exp(chi)});
  }
  s.tolerance += allowance;
  s.detail = {{"densities", opt.n_densities}, {"tail_allowance", allowance}};
  s.status = s.max_error <= s.tolerance ? SuiteStatus::pass : SuiteStatus::fail;
  return s;
}

/// T_d1(mu, L mu) <= C E_mu sum_i rho_i |(Id + L)^{-1} grad_i L| for random h.
inline SuiteResult validate_transport_inequality(const Engine& engine, const ValidationOptions& opt) {
  SuiteResult s;
  s.name = "transport_inequality";
  s.tolerance = 1e-9;
  const auto& model = engine.model();
  if (model.state_count() > opt.max_transport_states) {
    s.note = "state space above " + std::to_string(opt.max_transport_states);
    return s;
  }
  Rng rng = Rng(opt.seed).split(4);
  std::vector<CountVector> states;
  for (std::size_t k = 0; k < model.state_count(); ++k) states.push_back(model.counts(k));
  const CostMatrix cost = cost_matrix(states, states);
  const auto mu = DiscreteLaw::on_grid(model, engine.reference_law());
  nlohmann::json runs = nlohmann::json::array();
  std::size_t violations = 0, unit_violations = 0;
  double worst = -INFINITY;
  for (std::size_t r = 0; r < opt.n_densities; ++r) {
    const auto h = detail::random_h(model.atoms(), opt.h_lo, opt.h_hi, rng);
    const auto L = girsanov_table(model, h);
    const auto nu = DiscreteLaw::on_grid(model, engine.reference_law().cwiseProduct(L.values()));
    const double ot = exact_kantorovich(mu, nu, cost).value;
    const auto bound = resolvent_bound_exact(engine, h, opt.rademacher_constant);
    const double excess = ot - bound.value;
    worst = std::max(worst, excess);
    if (excess > s.tolerance) ++violations;
    if (ot > bound.l1_term + s.tolerance) ++unit_violations;
    runs.push_back({{"h", h}, {"transport", ot}, {"bound", bound.value}, {"bound_C1", bound.l1_term}});
  }
  s.max_error = std::max(0.0, worst);
  s.detail = {{"C", opt.rademacher_constant},
              {"violations", violations},
              {"violations_at_C1", unit_violations},
              {"runs", runs}};
  s.status = violations == 0 ? SuiteStatus::pass : SuiteStatus::fail;
  return s;
}

/// With h = 1 the definitional gradient of L vanishes, so the resolvent bound
/// and the derived closed form are 0 while the paper form gives the total
/// reference mass.
inline SuiteResult validate_gradient_form(const Engine& engine, const ValidationOptions&) {
  SuiteResult s;
  s.name = "gradient_form";
  s.tolerance = 1e-12;
  const auto& model = engine.model();
  const std::vector<double> one(model.atoms(), 1.0);
  const double exact = resolvent_bound_exact(engine, one, 1.0).value;
  const double derived = poisson_bound_closed_form(model, one, Variant::derived).value;
  const double paper = poisson_bound_closed_form(model, one, Variant::paper).value;
  const double mass = model.total_weight();
  s.max_error = std::max({std::abs(exact), std::abs(derived), std::abs(paper - mass)});
  s.detail = {{"resolvent_exact", exact}, {"derived", derived}, {"paper", paper}, {"total_mass", mass}};
  s.status = s.max_error <= s.tolerance && mass > s.tolerance ? SuiteStatus::pass : SuiteStatus::fail;
  return s;
}

inline ValidationReport validate_engine(const Engine& engine, const ValidationOptions& opt = {}) {
  ValidationReport rep;
  auto guarded = [&](const char* name, auto&& run) {
    try {
      rep.suites.push_back(run());
    } catch (const std::exception& e) {
      rep.suites.push_back(detail::failed(name, e));
    }
  };
  guarded("chaos_eigencheck", [&] { return validate_chaos(engine, opt, &rep.chaos_residuals); });
  guarded("commutation", [&] { return validate_commutation(engine, opt); });
  guarded("resolvent_mc", [&] { return validate_resolvent_mc(engine, opt); });
  guarded("girsanov_normalization", [&] { return validate_girsanov(engine, opt); });
  guarded("transport_inequality", [&] { return validate_transport_inequality(engine, opt); });
  guarded("gradient_form", [&] { return validate_gradient_form(engine, opt); });
  return rep;
}

}  // namespace ppt
