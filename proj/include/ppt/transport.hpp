#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ppt/assignment.hpp"
#include "ppt/config.hpp"
#include "ppt/engine.hpp"
#include "ppt/error.hpp"
#include "ppt/parallel.hpp"
#include "ppt/rng.hpp"
#include "ppt/stats.hpp"

namespace ppt {

using CostMatrix = Eigen::MatrixXd;

/// d1 between count vectors on a finite carrier (atoms never coincide).
inline double d1_distance(std::span<const int> a, std::span<const int> b) {
  long only_a = 0, only_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) only_a += a[i] - b[i];
    else only_b += b[i] - a[i];
  }
  return 2.0 * static_cast<double>(std::max(only_a, only_b));
}

inline CostMatrix cost_matrix(const std::vector<Configuration>& a,
                              const std::vector<Configuration>& b,
                              const GroundMetricSpec& spec) {
  CostMatrix c(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  parallel_for(a.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < b.size(); ++j)
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = distance(a[i], b[j], spec);
  });
  return c;
}

inline CostMatrix cost_matrix(const std::vector<CountVector>& a, const std::vector<CountVector>& b) {
  CostMatrix c(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  parallel_for(a.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < b.size(); ++j)
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d1_distance(a[i], b[j]);
  });
  return c;
}

// ---------------------------------------------------------------------------
// Empirical laws.

class EmpiricalLaw {
 public:
  explicit EmpiricalLaw(std::vector<Configuration> samples) : samples_(std::move(samples)) {
    if (samples_.empty()) throw Error(Errc::invalid_argument, "EmpiricalLaw: need N >= 1");
  }
  std::size_t size() const noexcept { return samples_.size(); }
  const std::vector<Configuration>& samples() const noexcept { return samples_; }

 private:
  std::vector<Configuration> samples_;
};

struct EmpiricalEstimate {
  double estimate = 0.0;
  double bootstrap_se = 0.0;
  std::size_t n = 0;
  std::size_t n_bootstrap = 0;
};

/// Optimal assignment cost / N between two equal-size empirical measures.
/// The larger law is down-sampled without replacement. Bootstrap resamples
/// one index vector and applies it to both sides, which keeps coupled
/// sample pairs together.
inline EmpiricalEstimate empirical_rubinstein(const EmpiricalLaw& mu, const EmpiricalLaw& nu,
                                              const GroundMetricSpec& spec, Rng& rng,
                                              std::size_t n_bootstrap = 50) {
  const std::size_t n = std::min(mu.size(), nu.size());
  auto take = [&](const EmpiricalLaw& law) {
    if (law.size() == n) return law.samples();
    std::vector<std::size_t> idx(law.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto r = k + static_cast<std::size_t>(rng.uniform() * static_cast<double>(idx.size() - k));
      std::swap(idx[k], idx[std::min(r, idx.size() - 1)]);
    }
    std::vector<Configuration> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.push_back(law.samples()[idx[k]]);
    return out;
  };
  const auto a = take(mu);
  const auto b = take(nu);
  const CostMatrix cost = cost_matrix(a, b, spec);

  EmpiricalEstimate out;
  out.n = n;
  out.n_bootstrap = n_bootstrap;
  out.estimate = assignment_solve(cost).cost / static_cast<double>(n);

  if (n_bootstrap > 0) {
    const Rng boot_root(rng());
    std::vector<double> reps(n_bootstrap);
    parallel_for(n_bootstrap, [&](std::size_t rep) {
      Rng r = boot_root.split(rep);
      std::vector<Eigen::Index> idx(n);
      for (auto& i : idx) i = static_cast<Eigen::Index>(std::min(n - 1, static_cast<std::size_t>(r.uniform() * static_cast<double>(n))));
      CostMatrix sub(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          sub(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cost(idx[i], idx[j]);
      reps[rep] = assignment_solve(sub).cost / static_cast<double>(n);
    });
    RunningStats s;
    for (double x : reps) s.add(x);
    out.bootstrap_se = std::sqrt(s.variance());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact transport between discrete laws.

/// Probability law on finitely many count vectors.
class DiscreteLaw {
 public:
  DiscreteLaw(std::vector<CountVector> states, std::vector<double> probs)
      : states_(std::move(states)), probs_(std::move(probs)) {
    if (states_.size() != probs_.size() || states_.empty())
      throw Error(Errc::invalid_argument, "DiscreteLaw: one probability per state");
    double total = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p))
        throw Error(Errc::invalid_argument, "DiscreteLaw: probabilities must be >= 0");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw Error(Errc::unbalanced, "Unbalanced: probabilities sum to " + std::to_string(total));
    auto sorted = states_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw Error(Errc::invalid_argument, "DiscreteLaw: states must be distinct");
  }

  /// Engine law: all grid states with the given (normalized) weights.
  static DiscreteLaw on_grid(const FiniteCarrierModel& model, const Eigen::VectorXd& weights) {
    std::vector<CountVector> states;
    std::vector<double> probs;
    const double z = weights.sum();
    for (std::size_t s = 0; s < model.state_count(); ++s) {
      states.push_back(model.counts(s));
      probs.push_back(weights(static_cast<Eigen::Index>(s)) / z);
    }
    double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    // Push the last ulp-level normalization error onto the largest entry.
    auto big = std::max_element(probs.begin(), probs.end());
    *big += 1.0 - total;
    return {std::move(states), std::move(probs)};
  }

  std::size_t size() const noexcept { return states_.size(); }
  const std::vector<CountVector>& states() const noexcept { return states_; }
  const std::vector<double>& probs() const noexcept { return probs_; }

 private:
  std::vector<CountVector> states_;
  std::vector<double> probs_;
};

struct PlanEntry {
  std::size_t i = 0;
  std::size_t j = 0;
  double mass = 0.0;
};

/// Integer transportation solution: flows on the arcs of the final basis
/// and the node potentials that certify it.
struct FlowSolution {
  std::vector<std::pair<std::size_t, std::size_t>> arcs;
  std::vector<std::int64_t> flows;
  double primal = 0.0;             // sum flow * cost
  double dual = 0.0;               // sum b_j psi_j + sum a_i phi_i
  double min_reduced_cost = 0.0;   // over all arcs; >= 0 up to round-off
};

/// Primal network simplex for the uncapacitated transportation problem
/// with integer supplies/demands of equal totals.
///
/// Artificial root with one artificial arc per node gives the initial
/// strongly feasible basis; the leaving-arc rule keeps it strongly feasible,
/// which rules out cycling. Entering arcs come from a cyclic block search
/// over real arcs only, so artificial arcs never re-enter.
inline FlowSolution transport_network_simplex(std::span<const std::int64_t> supply,
                                              std::span<const std::int64_t> demand,
                                              const CostMatrix& cost) {
  const auto n = supply.size(), m = demand.size();
  if (static_cast<std::size_t>(cost.rows()) != n || static_cast<std::size_t>(cost.cols()) != m)
    throw Error(Errc::invalid_argument, "network simplex: cost shape does not match marginals");
  std::int64_t total_a = 0, total_b = 0;
  for (auto a : supply) {
    if (a < 0) throw Error(Errc::invalid_argument, "network simplex: negative supply");
    total_a += a;
  }
  for (auto b : demand) {
    if (b < 0) throw Error(Errc::invalid_argument, "network simplex: negative demand");
    total_b += b;
  }
  if (total_a != total_b) throw Error(Errc::unbalanced, "Unbalanced: supply and demand totals differ");
  double max_cost = 0.0;
  for (Eigen::Index i = 0; i < cost.rows(); ++i)
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      if (!std::isfinite(cost(i, j)))
        throw Error(Errc::infinite_entry, "InfiniteEntry(" + std::to_string(i) + "," + std::to_string(j) + ")");
      max_cost = std::max(max_cost, std::abs(cost(i, j)));
    }

  const std::size_t nodes = n + m, root = nodes;
  const std::size_t real_arcs = n * m;
  const double art_cost = (max_cost + 1.0) * static_cast<double>(nodes + 1);
  const double eps = 1e-12 * art_cost;

  // Arc ids: i*m + j is source i -> sink n+j; real_arcs + v is artificial at v.
  std::vector<char> art_up(nodes);  // artificial arc v -> root (else root -> v)
  auto arc_source = [&](std::size_t e) -> std::size_t {
    if (e < real_arcs) return e / m;
    const auto v = e - real_arcs;
    return art_up[v] ? v : root;
  };
  auto arc_cost = [&](std::size_t e) -> double {
    if (e < real_arcs) return cost(static_cast<Eigen::Index>(e / m), static_cast<Eigen::Index>(e % m));
    return art_up[e - real_arcs] ? 0.0 : art_cost;
  };

  // Tree: slot s holds a basic arc and its flow; each non-root node points
  // to the slot of the arc joining it to its parent.
  std::vector<std::size_t> slot_arc(nodes);
  std::vector<std::int64_t> slot_flow(nodes);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(nodes + 1);
  for (std::size_t v = 0; v < nodes; ++v) {
    const std::int64_t b = v < n ? supply[v] : -demand[v - n];
    art_up[v] = b >= 0;
    slot_arc[v] = real_arcs + v;
    slot_flow[v] = b >= 0 ? b : -b;
    adj[v].emplace_back(root, v);
    adj[root].emplace_back(v, v);
  }

  std::vector<std::size_t> parent(nodes + 1), pred_slot(nodes + 1), depth(nodes + 1);
  std::vector<char> dir_up(nodes + 1);
  std::vector<double> pot(nodes + 1);
  std::vector<std::size_t> queue(nodes + 1);
  auto rebuild = [&] {
    std::size_t head = 0, tail = 0;
    queue[tail++] = root;
    parent[root] = root;
    depth[root] = 0;
    pot[root] = 0.0;
    while (head < tail) {
      const auto u = queue[head++];
      for (const auto& [v, s] : adj[u]) {
        if (v == parent[u] && u != root && s == pred_slot[u]) continue;
        parent[v] = u;
        pred_slot[v] = s;
        depth[v] = depth[u] + 1;
        const auto e = slot_arc[s];
        dir_up[v] = arc_source(e) == v;
        pot[v] = dir_up[v] ? pot[u] - arc_cost(e) : pot[u] + arc_cost(e);
        queue[tail++] = v;
      }
    }
  };
  rebuild();

  auto reduced = [&](std::size_t e) {
    const auto i = e / m, j = e % m;
    return cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) + pot[i] - pot[n + j];
  };

  const std::size_t block = std::max<std::size_t>(
      std::min<std::size_t>(real_arcs, 10), static_cast<std::size_t>(std::sqrt(static_cast<double>(real_arcs))));
  std::size_t next_arc = 0;
  constexpr std::int64_t inf_flow = std::numeric_limits<std::int64_t>::max();

  while (real_arcs > 0) {
    // Block search for the most negative reduced cost.
    std::size_t entering = real_arcs;
    double best = -eps;
    std::size_t scanned = 0, in_block = 0;
    for (std::size_t e = next_arc; scanned < real_arcs; ++scanned) {
      const double rc = reduced(e);
      if (rc < best) {
        best = rc;
        entering = e;
      }
      if (++e == real_arcs) e = 0;
      if (++in_block == block) {
        if (entering != real_arcs) {
          next_arc = e;
          break;
        }
        in_block = 0;
      }
    }
    if (entering == real_arcs) break;

    const std::size_t first = entering / m, second = n + entering % m;
    std::size_t a = first, b = second;
    while (a != b) {
      if (depth[a] > depth[b]) a = parent[a];
      else if (depth[b] > depth[a]) b = parent[b];
      else {
        a = parent[a];
        b = parent[b];
      }
    }
    const std::size_t join = a;

    std::int64_t delta = inf_flow;
    std::size_t u_out = root;
    bool out_on_first = true;
    for (std::size_t u = first; u != join; u = parent[u]) {
      const std::int64_t d = dir_up[u] ? slot_flow[pred_slot[u]] : inf_flow;
      if (d < delta) {
        delta = d;
        u_out = u;
        out_on_first = true;
      }
    }
    for (std::size_t u = second; u != join; u = parent[u]) {
      const std::int64_t d = dir_up[u] ? inf_flow : slot_flow[pred_slot[u]];
      if (d <= delta) {
        delta = d;
        u_out = u;
        out_on_first = false;
      }
    }
    if (delta == inf_flow || u_out == root)
      throw Error(Errc::solver_failure, "SolverFailure: unbounded pivot in network simplex");

    if (delta > 0) {
      for (std::size_t u = first; u != join; u = parent[u])
        slot_flow[pred_slot[u]] += dir_up[u] ? -delta : delta;
      for (std::size_t u = second; u != join; u = parent[u])
        slot_flow[pred_slot[u]] += dir_up[u] ? delta : -delta;
    }

    // Swap the leaving arc for the entering one and re-hang the tree.
    const std::size_t s = pred_slot[u_out];
    const std::size_t p = parent[u_out];
    auto drop = [&](std::size_t x, std::size_t y) {
      auto& list = adj[x];
      for (std::size_t k = 0; k < list.size(); ++k)
        if (list[k].first == y && list[k].second == s) {
          list[k] = list.back();
          list.pop_back();
          return;
        }
    };
    drop(u_out, p);
    drop(p, u_out);
    slot_arc[s] = entering;
    slot_flow[s] = delta;
    adj[first].emplace_back(second, s);
    adj[second].emplace_back(first, s);
    (void)out_on_first;
    rebuild();
  }

  FlowSolution out;
  for (std::size_t s = 0; s < nodes; ++s) {
    const auto e = slot_arc[s];
    if (e >= real_arcs) {
      if (slot_flow[s] != 0)
        throw Error(Errc::solver_failure, "SolverFailure: artificial flow left in the basis");
      continue;
    }
    if (slot_flow[s] == 0) continue;
    out.arcs.emplace_back(e / m, e % m);
    out.flows.push_back(slot_flow[s]);
    out.primal += static_cast<double>(slot_flow[s]) * arc_cost(e);
  }
  // phi_i = -pot[i], psi_j = pot[n+j]; reduced costs >= 0 make them feasible.
  for (std::size_t i = 0; i < n; ++i) out.dual -= static_cast<double>(supply[i]) * pot[i];
  for (std::size_t j = 0; j < m; ++j) out.dual += static_cast<double>(demand[j]) * pot[n + j];
  out.min_reduced_cost = real_arcs > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  for (std::size_t e = 0; e < real_arcs; ++e) out.min_reduced_cost = std::min(out.min_reduced_cost, reduced(e));
  return out;
}

struct TransportResult {
  double value = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;  // |primal - dual| / max(1, |primal|)
  std::vector<PlanEntry> plan;
};

namespace detail {

/// Largest-remainder rounding of probabilities to integers summing to scale.
inline std::vector<std::int64_t> to_grid(const std::vector<double>& probs, std::int64_t scale) {
  std::vector<std::int64_t> out(probs.size());
  std::vector<std::pair<double, std::size_t>> rem(probs.size());
  std::int64_t used = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double x = probs[i] * static_cast<double>(scale);
    out[i] = static_cast<std::int64_t>(std::floor(x));
    used += out[i];
    rem[i] = {x - std::floor(x), i};
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::int64_t left = scale - used;
  for (std::size_t k = 0; left > 0 && k < rem.size(); ++k, --left) ++out[rem[k].second];
  for (std::size_t k = rem.size(); left < 0 && k-- > 0;)
    if (out[rem[k].second] > 0) {
      --out[rem[k].second];
      ++left;
    }
  return out;
}

}  // namespace detail

/// Exact Kantorovich value between two discrete laws. Probabilities are
/// scaled to integers on a 2^50 grid and solved by network simplex; the
/// node potentials give the dual value and the reported gap.
inline TransportResult exact_kantorovich(const DiscreteLaw& mu, const DiscreteLaw& nu,
                                         const CostMatrix& cost) {
  constexpr std::int64_t scale = std::int64_t{1} << 50;
  const double sa = std::accumulate(mu.probs().begin(), mu.probs().end(), 0.0);
  const double sb = std::accumulate(nu.probs().begin(), nu.probs().end(), 0.0);
  if (std::abs(sa - sb) > 1e-12)
    throw Error(Errc::unbalanced, "Unbalanced: total masses differ by " + std::to_string(sa - sb));
  if (static_cast<std::size_t>(cost.rows()) != mu.size() || static_cast<std::size_t>(cost.cols()) != nu.size())
    throw Error(Errc::invalid_argument, "exact_kantorovich: cost shape does not match the laws");
  const auto a = detail::to_grid(mu.probs(), scale);
  const auto b = detail::to_grid(nu.probs(), scale);
  const auto sol = transport_network_simplex(a, b, cost);

  TransportResult out;
  const double s = static_cast<double>(scale);
  out.value = sol.primal / s;
  out.dual_value = sol.dual / s;
  out.gap = std::abs(sol.primal - sol.dual) / std::max(1.0, std::abs(sol.primal));
  for (std::size_t k = 0; k < sol.arcs.size(); ++k)
    out.plan.push_back({sol.arcs[k].first, sol.arcs[k].second, static_cast<double>(sol.flows[k]) / s});
  const double scale_c = std::max(1.0, cost.cwiseAbs().maxCoeff());
  if (out.gap > 1e-9 || sol.min_reduced_cost < -1e-9 * scale_c)
    throw Error(Errc::solver_failure, "SolverFailure: duality gap " + std::to_string(out.gap));
  return out;
}

// ---------------------------------------------------------------------------
// CSV.

inline void write_cost_csv(std::ostream& os, const CostMatrix& c) {
  os.precision(17);
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      if (j) os << ',';
      if (std::isinf(c(i, j))) os << "inf";
      else os << c(i, j);
    }
    os << '\n';
  }
}

inline CostMatrix read_cost_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw Error(Errc::parse_error, "cost csv: bad cell '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error(Errc::parse_error, "cost csv: ragged rows");
    rows.push_back(std::move(row));
  }
  CostMatrix c(static_cast<Eigen::Index>(rows.size()),
               rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      if (rows[i][j] < 0.0) throw Error(Errc::parse_error, "cost csv: negative entry");
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  return c;
}

inline void write_plan_csv(std::ostream& os, const std::vector<PlanEntry>& plan) {
  os.precision(17);
  os << "i,j,mass\n";
  for (const auto& p : plan) os << p.i << ',' << p.j << ',' << p.mass << '\n';
}

}  // namespace ppt
