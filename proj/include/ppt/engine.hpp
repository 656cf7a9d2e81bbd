#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <json.hpp>

#include "ppt/error.hpp"

namespace ppt {

using CountVector = std::vector<int>;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Poisson reference measure restricted to m atoms, with at most K points
/// per atom. States are count vectors in {0..K}^m, indexed with atom 0
/// varying fastest.
class FiniteCarrierModel {
 public:
  static constexpr std::size_t max_states = 1'000'000;

  FiniteCarrierModel(std::vector<double> weights, int truncation)
      : weights_(std::move(weights)), k_(truncation) {
    if (weights_.empty()) throw Error(Errc::invalid_argument, "FiniteCarrierModel: no atoms");
    for (double w : weights_)
      if (!(w > 0.0) || !std::isfinite(w))
        throw Error(Errc::invalid_argument, "FiniteCarrierModel: weights must be positive");
    if (k_ < 1) throw Error(Errc::invalid_argument, "FiniteCarrierModel: truncation K must be >= 1");
    std::size_t n = 1;
    strides_.reserve(weights_.size());
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      strides_.push_back(n);
      if (n > max_states) break;
      n *= static_cast<std::size_t>(k_ + 1);
    }
    states_ = strides_.size() == weights_.size() ? n : max_states + 1;
  }

  std::size_t atoms() const noexcept { return weights_.size(); }
  int truncation() const noexcept { return k_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double weight(std::size_t i) const { return weights_[i]; }
  double total_weight() const noexcept {
    double s = 0.0;
    for (double w : weights_) s += w;
    return s;
  }
  /// (K+1)^m, saturating just above max_states.
  std::size_t state_count() const noexcept { return states_; }
  std::size_t stride(std::size_t atom) const { return strides_[atom]; }

  bool in_range(std::span<const int> k) const noexcept {
    if (k.size() != atoms()) return false;
    for (int c : k)
      if (c < 0 || c > k_) return false;
    return true;
  }

  std::size_t index(std::span<const int> k) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < k.size(); ++i) idx += static_cast<std::size_t>(k[i]) * strides_[i];
    return idx;
  }

  CountVector counts(std::size_t idx) const {
    CountVector k(atoms());
    for (std::size_t i = 0; i < k.size(); ++i) {
      k[i] = static_cast<int>(idx % static_cast<std::size_t>(k_ + 1));
      idx /= static_cast<std::size_t>(k_ + 1);
    }
    return k;
  }

  /// Every k_i <= K - margin.
  bool interior(std::size_t idx, int margin) const {
    for (std::size_t i = 0; i < atoms(); ++i) {
      if (static_cast<int>(idx % static_cast<std::size_t>(k_ + 1)) > k_ - margin) return false;
      idx /= static_cast<std::size_t>(k_ + 1);
    }
    return true;
  }

 private:
  std::vector<double> weights_;
  int k_;
  std::vector<std::size_t> strides_;
  std::size_t states_ = 0;
};

inline FiniteCarrierModel finite_carrier_from_json(const nlohmann::json& j) {
  try {
    return FiniteCarrierModel(j.at("weights").get<std::vector<double>>(), j.at("K").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("engine: ") + e.what());
  }
}

/// A functional on the engine's state grid.
class TableFunctional {
 public:
  TableFunctional(const FiniteCarrierModel& model, Eigen::VectorXd values)
      : model_(std::make_shared<const FiniteCarrierModel>(model)), values_(std::move(values)) {
    if (static_cast<std::size_t>(values_.size()) != model.state_count())
      throw Error(Errc::invalid_argument, "TableFunctional: one value per state required");
    if (!values_.allFinite())
      throw Error(Errc::invalid_argument, "TableFunctional: values must be finite");
  }

  template <class F>
  static TableFunctional from_function(const FiniteCarrierModel& model, F&& f) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(model.state_count()));
    for (std::size_t s = 0; s < model.state_count(); ++s)
      v(static_cast<Eigen::Index>(s)) = f(model.counts(s));
    return TableFunctional(model, std::move(v));
  }

  const FiniteCarrierModel& model() const noexcept { return *model_; }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  double operator()(std::span<const int> k) const {
    return values_(static_cast<Eigen::Index>(model_->index(k)));
  }
  double at_index(std::size_t i) const { return values_(static_cast<Eigen::Index>(i)); }

 private:
  std::shared_ptr<const FiniteCarrierModel> model_;
  Eigen::VectorXd values_;
};

/// Matrix of the number operator delta-grad on the truncated grid:
/// (L F)(k) = sum_i rho_i (F(k) - F(k+e_i)) + sum_i k_i (F(k) - F(k-e_i)),
/// with the birth term dropped where k_i = K.
inline SparseMatrix build_generator_matrix(const FiniteCarrierModel& model) {
  const std::size_t n = model.state_count();
  if (n > FiniteCarrierModel::max_states)
    throw Error(Errc::state_space_too_large,
                "StateSpaceTooLarge: (K+1)^m exceeds " + std::to_string(FiniteCarrierModel::max_states));
  const int K = model.truncation();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(n * (2 * model.atoms() + 1));
  for (std::size_t s = 0; s < n; ++s) {
    const auto k = model.counts(s);
    double diag = 0.0;
    for (std::size_t i = 0; i < model.atoms(); ++i) {
      const auto stride = model.stride(i);
      if (k[i] < K) {
        diag += model.weight(i);
        trips.emplace_back(s, s + stride, -model.weight(i));
      }
      if (k[i] > 0) {
        diag += k[i];
        trips.emplace_back(s, s - stride, -static_cast<double>(k[i]));
      }
    }
    trips.emplace_back(s, s, diag);
  }
  SparseMatrix gen(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  gen.setFromTriplets(trips.begin(), trips.end());
  return gen;
}

/// Product of Poisson(rho_i) laws, each conditioned on {0..K}. This is the
/// reversible law of the truncated generator.
inline Eigen::VectorXd truncated_poisson_law(const FiniteCarrierModel& model) {
  const int K = model.truncation();
  std::vector<std::vector<double>> marg(model.atoms());
  for (std::size_t i = 0; i < model.atoms(); ++i) {
    const double rho = model.weight(i);
    auto& p = marg[i];
    p.resize(static_cast<std::size_t>(K + 1));
    for (int c = 0; c <= K; ++c) p[static_cast<std::size_t>(c)] = std::exp(-rho + c * std::log(rho) - std::lgamma(c + 1.0));
    double z = 0.0;
    for (double x : p) z += x;
    for (double& x : p) x /= z;
  }
  Eigen::VectorXd law(static_cast<Eigen::Index>(model.state_count()));
  for (std::size_t s = 0; s < model.state_count(); ++s) {
    const auto k = model.counts(s);
    double w = 1.0;
    for (std::size_t i = 0; i < k.size(); ++i) w *= marg[i][static_cast<std::size_t>(k[i])];
    law(static_cast<Eigen::Index>(s)) = w;
  }
  return law;
}

/// Largest per-atom Poisson tail mass beyond K.
inline double truncation_tail_mass(const FiniteCarrierModel& model) {
  double worst = 0.0;
  for (double rho : model.weights()) {
    double head = 0.0;
    for (int c = 0; c <= model.truncation(); ++c)
      head += std::exp(-rho + c * std::log(rho) - std::lgamma(c + 1.0));
    worst = std::max(worst, 1.0 - head);
  }
  return std::max(worst, 0.0);
}

/// Exact truncated engine: the generator plus its semigroup and resolvent.
/// Immutable after construction; the resolvent factorization is built once
/// on first use.
class Engine {
 public:
  explicit Engine(FiniteCarrierModel model)
      : model_(std::move(model)),
        generator_(build_generator_matrix(model_)),
        law_(truncated_poisson_law(model_)) {
    uniform_rate_ = generator_.diagonal().maxCoeff();
  }

  const FiniteCarrierModel& model() const noexcept { return model_; }
  const SparseMatrix& generator() const noexcept { return generator_; }
  const Eigen::VectorXd& reference_law() const noexcept { return law_; }
  double uniformization_rate() const noexcept { return uniform_rate_; }

  TableFunctional table(Eigen::VectorXd values) const { return {model_, std::move(values)}; }

  template <class F>
  TableFunctional tabulate(F&& f) const {
    return TableFunctional::from_function(model_, std::forward<F>(f));
  }

  double expectation(const TableFunctional& f) const { return law_.dot(f.values()); }

  TableFunctional apply_generator(const TableFunctional& f) const {
    return table(generator_ * f.values());
  }

  /// exp(-t L) f by uniformization: sum_n Poisson(Lambda t; n) P^n f with
  /// P = I - L / Lambda stochastic.
  Eigen::VectorXd semigroup_values(const Eigen::VectorXd& f, double t) const {
    if (!(t >= 0.0)) throw Error(Errc::invalid_argument, "semigroup: t must be >= 0");
    if (t == 0.0 || uniform_rate_ == 0.0) return f;
    const double lt = uniform_rate_ * t;
    const auto n_max = static_cast<std::size_t>(std::ceil(lt + 12.0 * std::sqrt(lt) + 50.0));
    std::vector<double> w(n_max + 1);
    double wsum = 0.0;
    for (std::size_t n = 0; n <= n_max; ++n) {
      w[n] = std::exp(-lt + static_cast<double>(n) * std::log(lt) - std::lgamma(static_cast<double>(n) + 1.0));
      wsum += w[n];
    }
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(f.size());
    Eigen::VectorXd v = f;
    const double inv = 1.0 / uniform_rate_;
    for (std::size_t n = 0; n <= n_max; ++n) {
      if (w[n] > 0.0) acc.noalias() += (w[n] / wsum) * v;
      if (n < n_max) v -= inv * (generator_ * v);
    }
    return acc;
  }

  TableFunctional semigroup(const TableFunctional& f, double t) const {
    return table(semigroup_values(f.values(), t));
  }

  /// Solves (Id + L) x = f.
  Eigen::VectorXd resolvent_values(const Eigen::VectorXd& f) const {
    std::call_once(lu_once_, [this] {
      SparseMatrix a = generator_;
      for (Eigen::Index i = 0; i < a.rows(); ++i) a.coeffRef(i, i) += 1.0;
      a.makeCompressed();
      lu_ = std::make_shared<Eigen::SparseLU<SparseMatrix>>();
      lu_->compute(a);
    });
    if (lu_->info() != Eigen::Success)
      throw Error(Errc::solver_failure, "SolverFailure: factorization of Id + L failed");
    Eigen::VectorXd x = lu_->solve(f);
    const Eigen::VectorXd r = x + generator_ * x - f;
    const double scale = std::max(1.0, f.cwiseAbs().maxCoeff());
    if (lu_->info() != Eigen::Success || !(r.cwiseAbs().maxCoeff() <= 1e-10 * scale))
      throw Error(Errc::solver_failure, "SolverFailure: resolvent residual above 1e-10");
    return x;
  }

  TableFunctional resolvent(const TableFunctional& f) const {
    return table(resolvent_values(f.values()));
  }

  /// F(k + e_i) - F(k) on the grid; zero where k_i = K (no successor state).
  TableFunctional gradient(const TableFunctional& f, std::size_t atom) const {
    Eigen::VectorXd g(f.values().size());
    const auto stride = model_.stride(atom);
    for (std::size_t s = 0; s < model_.state_count(); ++s) {
      const int ki = static_cast<int>((s / stride) % static_cast<std::size_t>(model_.truncation() + 1));
      g(static_cast<Eigen::Index>(s)) =
          ki < model_.truncation() ? f.at_index(s + stride) - f.at_index(s) : 0.0;
    }
    return table(std::move(g));
  }

 private:
  FiniteCarrierModel model_;
  SparseMatrix generator_;
  Eigen::VectorXd law_;
  double uniform_rate_ = 0.0;
  mutable std::once_flag lu_once_;
  mutable std::shared_ptr<Eigen::SparseLU<SparseMatrix>> lu_;
};

inline TableFunctional exact_semigroup(const Engine& engine, const TableFunctional& f, double t) {
  return engine.semigroup(f, t);
}

inline TableFunctional exact_resolvent(const Engine& engine, const TableFunctional& f) {
  return engine.resolvent(f);
}

/// Monic Charlier polynomial of degree n at k for the Poisson(theta) law:
/// C_{j+1} = (k - j - theta) C_j - j theta C_{j-1}. Satisfies
/// theta (C(k) - C(k+1)) + k (C(k) - C(k-1)) = n C(k).
inline double charlier_eval(int n, double k, double theta) {
  if (n < 0) throw Error(Errc::invalid_argument, "charlier_eval: order must be >= 0");
  double prev = 1.0;
  if (n == 0) return prev;
  double cur = k - theta;
  for (int j = 1; j < n; ++j) {
    const double next = (k - j - theta) * cur - j * theta * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

/// prod_i C_{n_i}(k_i; rho_i): an element of the chaos of order sum n_i.
inline TableFunctional chaos_table(const FiniteCarrierModel& model, std::span<const int> orders) {
  if (orders.size() != model.atoms())
    throw Error(Errc::invalid_argument, "chaos_table: one order per atom");
  return TableFunctional::from_function(model, [&](const CountVector& k) {
    double v = 1.0;
    for (std::size_t i = 0; i < k.size(); ++i) v *= charlier_eval(orders[i], k[i], model.weight(i));
    return v;
  });
}

struct ChaosCheckOptions {
  int max_order = 5;         // per atom
  double tolerance = 1e-8;   // relative to the chaos's interior sup norm
  int margin = 10;           // interior = all k_i <= K - margin
};

struct ChaosEntry {
  std::vector<int> orders;
  int eigenvalue = 0;
  double residual = 0.0;
};

struct ChaosReport {
  std::vector<ChaosEntry> entries;
  double max_residual = 0.0;
};

/// sup over interior states of |a - b|, divided by sup over interior of |scale|.
inline double interior_relative_gap(const FiniteCarrierModel& model, const Eigen::VectorXd& a,
                                    const Eigen::VectorXd& b, const Eigen::VectorXd& scale,
                                    int margin) {
  double num = 0.0, den = 0.0;
  for (std::size_t s = 0; s < model.state_count(); ++s) {
    if (!model.interior(s, margin)) continue;
    const auto i = static_cast<Eigen::Index>(s);
    num = std::max(num, std::abs(a(i) - b(i)));
    den = std::max(den, std::abs(scale(i)));
  }
  return den > 0.0 ? num / den : num;
}

/// Applies the generator to every Charlier product with n_i <= max_order
/// and measures the eigen-residual |L C - (sum n_i) C| on interior states.
inline ChaosReport chaos_eigencheck(const Engine& engine, const ChaosCheckOptions& opt = {}) {
  const auto& model = engine.model();
  if (model.atoms() > 3 || model.truncation() < 40)
    throw Error(Errc::invalid_argument, "chaos_eigencheck: requires m <= 3 and K >= 40");
  ChaosReport report;
  std::vector<int> orders(model.atoms(), 0);
  while (true) {
    const auto c = chaos_table(model, orders);
    int n = 0;
    for (int o : orders) n += o;
    const Eigen::VectorXd lc = engine.generator() * c.values();
    const double res = interior_relative_gap(model, lc, static_cast<double>(n) * c.values(),
                                             c.values(), opt.margin);
    report.entries.push_back({orders, n, res});
    report.max_residual = std::max(report.max_residual, res);
    if (!(res < opt.tolerance)) {
      std::string tag;
      for (int o : orders) tag += (tag.empty() ? "" : ",") + std::to_string(o);
      throw Error(Errc::tolerance_exceeded, "ToleranceExceeded: chaos (" + tag +
                                                ") eigen-residual " + std::to_string(res));
    }
    std::size_t i = 0;
    while (i < orders.size() && ++orders[i] > opt.max_order) orders[i++] = 0;
    if (i == orders.size()) break;
  }
  return report;
}

/// Density of the Poisson law with weights h_i rho_i against the one with
/// weights rho_i, at count vector k: prod h_i^{k_i} exp(-sum (h_i - 1) rho_i).
/// Defined for every k, including counts beyond the grid.
inline double girsanov_density(std::span<const int> k, const FiniteCarrierModel& model,
                               std::span<const double> h) {
  double log_l = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    log_l -= (h[i] - 1.0) * model.weight(i);
    if (k[i] == 0) continue;
    if (h[i] == 0.0) return 0.0;
    log_l += k[i] * std::log(h[i]);
  }
  return std::exp(log_l);
}

inline TableFunctional girsanov_table(const FiniteCarrierModel& model, std::span<const double> h) {
  if (h.size() != model.atoms())
    throw Error(Errc::invalid_argument, "girsanov_table: one h value per atom");
  for (double v : h)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw Error(Errc::invalid_argument, "girsanov_table: h must be finite and >= 0");
  return TableFunctional::from_function(
      model, [&](const CountVector& k) { return girsanov_density(k, model, h); });
}

}  // namespace ppt
