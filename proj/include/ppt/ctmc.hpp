#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ppt/error.hpp"
#include "ppt/rng.hpp"

namespace ppt {

/// Finite-state generator with a rate attached to every state (the MMPP
/// phase intensities). Only obtainable through validate_generator.
class CtmcModel {
 public:
  std::size_t states() const noexcept { return rates_.size(); }
  const Eigen::MatrixXd& generator() const noexcept { return q_; }
  const std::vector<double>& rates() const noexcept { return rates_; }
  const std::vector<double>& stationary() const noexcept { return pi_; }
  double exit_rate(std::size_t i) const { return -q_(i, i); }

 private:
  friend CtmcModel validate_generator(const Eigen::MatrixXd&, std::vector<double>);
  CtmcModel() = default;

  Eigen::MatrixXd q_;
  std::vector<double> rates_;
  std::vector<double> pi_;
};

/// pi Q = 0, sum pi = 1, via a dense solve of Q^T with the last equation
/// replaced by the normalization row.
inline std::vector<double> stationary_distribution(const Eigen::MatrixXd& q) {
  const auto m = q.rows();
  Eigen::MatrixXd a = q.transpose();
  a.row(m - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  b(m - 1) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible())
    throw Error(Errc::singular_system, "SingularSystem: stationary equations are singular");
  const Eigen::VectorXd pi = lu.solve(b);
  const double scale = std::max(1.0, q.cwiseAbs().maxCoeff());
  const double residual = (pi.transpose() * q).cwiseAbs().maxCoeff();
  if (residual > 1e-10 * scale || (pi.array() <= 0.0).any())
    throw Error(Errc::singular_system,
                "SingularSystem: stationary solve broke down (residual " +
                    std::to_string(residual) + ")");
  return {pi.data(), pi.data() + m};
}

inline const std::vector<double>& stationary_distribution(const CtmcModel& model) {
  return model.stationary();
}

namespace detail {

inline bool strongly_connected(const Eigen::MatrixXd& q) {
  const auto m = q.rows();
  auto reach = [&](bool forward) {
    std::vector<char> seen(static_cast<std::size_t>(m), 0);
    std::vector<Eigen::Index> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      for (Eigen::Index j = 0; j < m; ++j) {
        const double w = forward ? q(i, j) : q(j, i);
        if (j != i && w > 0.0 && !seen[static_cast<std::size_t>(j)]) {
          seen[static_cast<std::size_t>(j)] = 1;
          stack.push_back(j);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  return reach(true) && reach(false);
}

}  // namespace detail

/// Checks the generator invariants in a fixed order and names the first one
/// violated: NonSquare, NegativeOffDiagonal(i,j), RowSumNonzero(i), Reducible.
inline CtmcModel validate_generator(const Eigen::MatrixXd& q, std::vector<double> rates) {
  if (q.rows() != q.cols() || q.rows() == 0)
    throw Error(Errc::non_square, "NonSquare: generator is " + std::to_string(q.rows()) + "x" +
                                      std::to_string(q.cols()));
  const auto m = q.rows();
  if (!q.allFinite()) throw Error(Errc::invalid_argument, "generator has non-finite entries");
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j && q(i, j) < 0.0)
        throw Error(Errc::negative_off_diagonal,
                    "NegativeOffDiagonal(" + std::to_string(i) + "," + std::to_string(j) +
                        "): entry is " + std::to_string(q(i, j)));
  for (Eigen::Index i = 0; i < m; ++i) {
    const double scale = std::max(1.0, q.row(i).cwiseAbs().maxCoeff());
    const double sum = q.row(i).sum();
    if (std::abs(sum) > 1e-12 * scale)
      throw Error(Errc::row_sum_nonzero, "RowSumNonzero(" + std::to_string(i) + "): row sums to " +
                                             std::to_string(sum));
  }
  if (!detail::strongly_connected(q))
    throw Error(Errc::reducible, "Reducible: the transition graph is not strongly connected");
  if (rates.size() != static_cast<std::size_t>(m))
    throw Error(Errc::rate_mismatch, "RateMismatch: " + std::to_string(rates.size()) +
                                         " rates for " + std::to_string(m) + " states");
  for (std::size_t i = 0; i < rates.size(); ++i)
    if (!(rates[i] >= 0.0) || !std::isfinite(rates[i]))
      throw Error(Errc::invalid_argument,
                  "NegativeRate(" + std::to_string(i) + "): rates must be finite and >= 0");

  CtmcModel model;
  model.q_ = q;
  model.rates_ = std::move(rates);
  model.pi_ = stationary_distribution(q);
  return model;
}

inline CtmcModel validate_generator(const Eigen::MatrixXd& q) {
  return validate_generator(q, std::vector<double>(static_cast<std::size_t>(q.rows()), 0.0));
}

/// Initial law of the modulating chain.
struct InitialState {
  bool stationary = true;
  std::size_t state = 0;

  static InitialState from_stationary() { return {true, 0}; }
  static InitialState fixed(std::size_t i) { return {false, i}; }
};

/// Right-continuous piecewise-constant trajectory on [0, T].
class CtmcPath {
 public:
  CtmcPath(std::size_t initial, std::vector<double> jump_times, std::vector<std::size_t> states,
           double horizon)
      : initial_(initial),
        jump_times_(std::move(jump_times)),
        states_(std::move(states)),
        horizon_(horizon) {
    if (jump_times_.size() != states_.size())
      throw Error(Errc::invalid_argument, "CtmcPath: one post-jump state per jump time");
    if (!(horizon_ > 0.0)) throw Error(Errc::invalid_argument, "CtmcPath: horizon must be > 0");
    double prev = 0.0;
    for (double t : jump_times_) {
      if (!(t > prev) || t > horizon_)
        throw Error(Errc::invalid_argument,
                    "CtmcPath: jump times must be strictly increasing in (0, T]");
      prev = t;
    }
  }

  std::size_t initial_state() const noexcept { return initial_; }
  const std::vector<double>& jump_times() const noexcept { return jump_times_; }
  const std::vector<std::size_t>& states() const noexcept { return states_; }
  double horizon() const noexcept { return horizon_; }
  std::size_t jumps() const noexcept { return jump_times_.size(); }

  std::size_t state_at(double t) const {
    const auto it = std::upper_bound(jump_times_.begin(), jump_times_.end(), t);
    return it == jump_times_.begin() ? initial_ : states_[static_cast<std::size_t>(it - jump_times_.begin()) - 1];
  }

  /// f(start, end, state) for each constant segment, in time order.
  template <class F>
  void for_each_segment(F&& f) const {
    double start = 0.0;
    std::size_t state = initial_;
    for (std::size_t k = 0; k < jump_times_.size(); ++k) {
      f(start, jump_times_[k], state);
      start = jump_times_[k];
      state = states_[k];
    }
    if (horizon_ > start) f(start, horizon_, state);
  }

 private:
  std::size_t initial_;
  std::vector<double> jump_times_;
  std::vector<std::size_t> states_;
  double horizon_;
};

inline std::size_t sample_categorical(std::span<const double> weights, double total, Rng& rng) {
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last = i;
    acc += weights[i];
    if (u < acc) return i;
  }
  return last;
}

/// Gillespie simulation truncated at T.
inline CtmcPath sample_ctmc_path(const CtmcModel& model, InitialState init, double T, Rng& rng) {
  if (!(T > 0.0)) throw Error(Errc::invalid_argument, "sample_ctmc_path: T must be > 0");
  const std::size_t m = model.states();
  std::size_t state = init.state;
  if (init.stationary) {
    state = sample_categorical(model.stationary(), 1.0, rng);
  } else if (state >= m) {
    throw Error(Errc::invalid_argument, "sample_ctmc_path: initial state out of range");
  }
  const std::size_t initial = state;
  std::vector<double> times;
  std::vector<std::size_t> states;
  const auto& q = model.generator();
  std::vector<double> row(m);
  double t = 0.0;
  while (true) {
    const double exit = model.exit_rate(state);
    if (!(exit > 0.0)) break;
    t += rng.exponential(exit);
    if (t > T) break;
    for (std::size_t j = 0; j < m; ++j)
      row[j] = j == state ? 0.0 : q(static_cast<Eigen::Index>(state), static_cast<Eigen::Index>(j));
    state = sample_categorical(row, exit, rng);
    times.push_back(t);
    states.push_back(state);
  }
  return CtmcPath(initial, std::move(times), std::move(states), T);
}

struct PathIntegrals {
  double s1 = 0.0;  // integral of rate(J_s) ds
  double s2 = 0.0;  // integral of rate(J_s)^2 ds
};

/// Exact segment sums; no quadrature.
inline PathIntegrals path_integrals(const CtmcPath& path, std::span<const double> rates) {
  PathIntegrals out;
  path.for_each_segment([&](double a, double b, std::size_t s) {
    const double d = b - a;
    out.s1 += d * rates[s];
    out.s2 += d * rates[s] * rates[s];
  });
  return out;
}

/// Time spent in each state over [0, T].
inline std::vector<double> occupation_times(const CtmcPath& path, std::size_t states) {
  std::vector<double> occ(states, 0.0);
  path.for_each_segment([&](double a, double b, std::size_t s) { occ[s] += b - a; });
  return occ;
}

// File format: {"m": 2, "Q": [q00, q01, q10, q11], "rates": [..]}; Q may also
// be given as nested rows.

inline CtmcModel ctmc_model_from_json(const nlohmann::json& j) {
  try {
    const auto m = j.at("m").get<std::size_t>();
    Eigen::MatrixXd q(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    const auto& jq = j.at("Q");
    if (!jq.is_array()) throw Error(Errc::parse_error, "model: Q must be an array");
    if (!jq.empty() && jq.front().is_array()) {
      if (jq.size() != m) throw Error(Errc::non_square, "NonSquare: Q has " + std::to_string(jq.size()) + " rows, m = " + std::to_string(m));
      for (std::size_t i = 0; i < m; ++i) {
        if (jq[i].size() != m)
          throw Error(Errc::non_square, "NonSquare: row " + std::to_string(i) + " has " +
                                            std::to_string(jq[i].size()) + " entries");
        for (std::size_t k = 0; k < m; ++k)
          q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = jq[i][k].get<double>();
      }
    } else {
      if (jq.size() != m * m)
        throw Error(Errc::non_square, "NonSquare: Q has " + std::to_string(jq.size()) +
                                          " entries, expected m*m = " + std::to_string(m * m));
      for (std::size_t i = 0; i < m * m; ++i)
        q(static_cast<Eigen::Index>(i / m), static_cast<Eigen::Index>(i % m)) = jq[i].get<double>();
    }
    auto rates = j.at("rates").get<std::vector<double>>();
    return validate_generator(q, std::move(rates));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("model: ") + e.what());
  }
}

inline nlohmann::json to_json_value(const CtmcModel& model) {
  const auto m = model.states();
  std::vector<double> flat;
  flat.reserve(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < m; ++k)
      flat.push_back(model.generator()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
  return {{"m", m}, {"Q", flat}, {"rates", model.rates()}};
}

}  // namespace ppt
