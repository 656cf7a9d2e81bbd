#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ppt/sample.hpp"
#include "ppt/transport.hpp"
#include "ppt/validate.hpp"

using ppt::CountVector;
using ppt::DiscreteLaw;
using ppt::Rng;

namespace {

std::vector<ppt::Configuration> poisson_samples(double rate, int n, Rng& rng) {
  std::vector<ppt::Configuration> out;
  for (int i = 0; i < n; ++i) out.push_back(ppt::sample_poisson_homogeneous(rate, ppt::Window::horizon(1.0), rng));
  return out;
}

Eigen::MatrixXd random_integer_matrix(int r, int c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = std::floor(rng.uniform() * 20.0);
  return m;
}

std::vector<CountVector> labels(std::size_t n) {
  std::vector<CountVector> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back({static_cast<int>(i)});
  return s;
}

}  // namespace

TEST(CostMatrix, Examples) {
  Rng rng(61);
  const auto a = poisson_samples(2.0, 12, rng);
  for (const auto& spec : {ppt::GroundMetricSpec::total_variation(), ppt::GroundMetricSpec::matching(0.5)}) {
    const auto c = ppt::cost_matrix(a, a, spec);
    for (int i = 0; i < 12; ++i) {
      EXPECT_EQ(c(i, i), 0.0);
      for (int j = 0; j < 12; ++j) {
        if (std::isfinite(c(i, j))) {
          EXPECT_EQ(c(i, j), c(j, i));
        }
      }
    }
  }
  const std::vector<ppt::Configuration> x{ppt::Configuration::from_times({0.1, 0.4})};
  const std::vector<ppt::Configuration> y{ppt::Configuration::from_times({0.2})};
  const auto c = ppt::cost_matrix(x, y, ppt::GroundMetricSpec::total_variation());
  ASSERT_EQ(c.size(), 1);
  EXPECT_EQ(c(0, 0), ppt::d1_distance(x[0], y[0]));
}

TEST(CountVectorD1, AgreesWithConfigurationD1) {
  Rng rng(62);
  for (int trial = 0; trial < 500; ++trial) {
    CountVector a(3), b(3);
    std::vector<double> ta, tb;
    for (int i = 0; i < 3; ++i) {
      a[i] = static_cast<int>(rng.uniform() * 4);
      b[i] = static_cast<int>(rng.uniform() * 4);
      ta.insert(ta.end(), static_cast<std::size_t>(a[i]), static_cast<double>(i));
      tb.insert(tb.end(), static_cast<std::size_t>(b[i]), static_cast<double>(i));
    }
    ASSERT_EQ(ppt::d1_distance(a, b),
              ppt::d1_distance(ppt::Configuration::from_times(ta), ppt::Configuration::from_times(tb)));
  }
}

TEST(Assignment, MatchesBruteForce) {
  Rng rng(63);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 7;
    const auto m = random_integer_matrix(n, n, rng);
    ASSERT_EQ(ppt::assignment_solve(m).cost, oracle::assignment_brute_force(m)) << trial;
  }
}

TEST(NetworkSimplex, MatchesExpandedBruteForce) {
  Rng rng(64);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 4), m = 1 + static_cast<int>(rng.uniform() * 4);
    const int total = std::max(n, m) + static_cast<int>(rng.uniform() * (8 - std::max(n, m)));
    auto spread = [&](int parts) {
      std::vector<std::int64_t> v(static_cast<std::size_t>(parts), 0);
      for (int u = 0; u < total; ++u) ++v[static_cast<std::size_t>(rng.uniform() * parts)];
      return v;
    };
    const auto a = spread(n), b = spread(m);
    const auto c = random_integer_matrix(n, m, rng);
    const auto sol = ppt::transport_network_simplex(a, b, c);
    ASSERT_EQ(sol.primal, oracle::transport_brute_force(a, b, c)) << trial;
    ASSERT_EQ(sol.primal, sol.dual) << trial;
    ASSERT_GE(sol.min_reduced_cost, 0.0);
    // Flows are a feasible plan.
    std::vector<std::int64_t> out(a.size(), 0), in(b.size(), 0);
    for (std::size_t k = 0; k < sol.arcs.size(); ++k) {
      ASSERT_GT(sol.flows[k], 0);
      out[sol.arcs[k].first] += sol.flows[k];
      in[sol.arcs[k].second] += sol.flows[k];
    }
    ASSERT_EQ(out, a);
    ASSERT_EQ(in, b);
  }
}

TEST(NetworkSimplex, ZeroMassNodesAndErrors) {
  const std::vector<std::int64_t> a{0, 3, 0}, b{2, 0, 1};
  Eigen::MatrixXd c(3, 3);
  c << 1, 1, 1, 5, 0, 2, 1, 1, 1;
  EXPECT_EQ(ppt::transport_network_simplex(a, b, c).primal, 12.0);
  const std::vector<std::int64_t> short_b{2, 0, 0};
  EXPECT_THROW(ppt::transport_network_simplex(a, short_b, c), ppt::Error);
}

TEST(ExactKantorovich, Examples) {
  const DiscreteLaw two(labels(2), {0.5, 0.5});
  Eigen::MatrixXd c(2, 2);
  c << 0, 2, 2, 0;
  EXPECT_EQ(ppt::exact_kantorovich(two, two, c).value, 0.0);

  const DiscreteLaw a({{0}}, {1.0}), b({{1}}, {1.0});
  Eigen::MatrixXd one(1, 1);
  one << 3.5;
  EXPECT_EQ(ppt::exact_kantorovich(a, b, one).value, 3.5);

  Eigen::MatrixXd to_a(2, 1);
  to_a << 0, 2;
  const auto r = ppt::exact_kantorovich(two, a, to_a);
  EXPECT_EQ(r.value, 1.0);
  EXPECT_LE(r.gap, 1e-9);
  double mass = 0.0;
  for (const auto& p : r.plan) mass += p.mass;
  EXPECT_EQ(mass, 1.0);
}

TEST(ExactKantorovich, InvalidLaws) {
  try {
    DiscreteLaw(labels(2), {0.5, 0.6});
    FAIL();
  } catch (const ppt::Error& e) {
    EXPECT_EQ(e.code(), ppt::Errc::unbalanced);
  }
  EXPECT_THROW(DiscreteLaw({{1}, {1}}, {0.5, 0.5}), ppt::Error);
  EXPECT_THROW(DiscreteLaw(labels(2), {1.5, -0.5}), ppt::Error);
}

TEST(ExactKantorovich, UniformLawsReduceToAssignment) {
  Rng rng(65);
  for (int n : {8, 64, 256}) {
    Eigen::MatrixXd c(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) c(i, j) = rng.uniform();
    const DiscreteLaw u(labels(static_cast<std::size_t>(n)), std::vector<double>(static_cast<std::size_t>(n), 1.0 / n));
    const auto r = ppt::exact_kantorovich(u, u, c);
    EXPECT_NEAR(r.value, ppt::assignment_solve(c).cost / n, 1e-12) << n;
    EXPECT_LE(r.gap, 1e-9);
  }
}

TEST(ExactKantorovich, RationalLawsMatchBruteForce) {
  Rng rng(66);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 4, m = 1 + (trial / 4) % 4;
    std::vector<std::int64_t> a(static_cast<std::size_t>(n), 0), b(static_cast<std::size_t>(m), 0);
    for (int u = 0; u < 6; ++u) {
      ++a[static_cast<std::size_t>(rng.uniform() * n)];
      ++b[static_cast<std::size_t>(rng.uniform() * m)];
    }
    std::vector<double> pa, pb;
    for (auto x : a) pa.push_back(x / 6.0);
    for (auto x : b) pb.push_back(x / 6.0);
    const auto c = random_integer_matrix(n, m, rng);
    const double r = ppt::exact_kantorovich(DiscreteLaw(labels(a.size()), pa), DiscreteLaw(labels(b.size()), pb), c).value;
    ASSERT_NEAR(r, oracle::transport_brute_force(a, b, c) / 6.0, 1e-12) << trial;
  }
}

TEST(ExactKantorovich, EngineInequalityAtRademacherConstant) {
  const ppt::Engine engine(ppt::FiniteCarrierModel({0.5, 1.5}, 20));
  ppt::ValidationOptions opt;
  const auto r = ppt::validate_transport_inequality(engine, opt);
  EXPECT_EQ(r.status, ppt::SuiteStatus::pass) << r.detail.dump();
}

TEST(EmpiricalRubinstein, SameSamplesGiveZero) {
  Rng rng(67);
  const ppt::EmpiricalLaw mu(poisson_samples(1.0, 100, rng));
  const auto r = ppt::empirical_rubinstein(mu, mu, ppt::GroundMetricSpec::total_variation(), rng);
  EXPECT_EQ(r.estimate, 0.0);
  EXPECT_EQ(r.n_bootstrap, 50u);
}

TEST(EmpiricalRubinstein, SameLawMatchesSelfDistanceBaseline) {
  Rng rng(68);
  const auto spec = ppt::GroundMetricSpec::total_variation();
  const auto a = ppt::empirical_rubinstein(ppt::EmpiricalLaw(poisson_samples(1.0, 500, rng)),
                                           ppt::EmpiricalLaw(poisson_samples(1.0, 500, rng)), spec, rng);
  const auto base = ppt::empirical_rubinstein(ppt::EmpiricalLaw(poisson_samples(1.0, 500, rng)),
                                              ppt::EmpiricalLaw(poisson_samples(1.0, 500, rng)), spec, rng);
  EXPECT_LE(std::abs(a.estimate - base.estimate), 3 * std::hypot(a.bootstrap_se, base.bootstrap_se));
}

TEST(EmpiricalRubinstein, DominatesCountingWitness) {
  // F = min(count, 20) changes by at most d1 / 2, so 2 (E_nu F - E_mu F) is a
  // lower bound that also holds exactly between the empirical measures.
  Rng rng(69);
  const auto x = poisson_samples(1.0, 500, rng), y = poisson_samples(2.0, 500, rng);
  double fx = 0.0, fy = 0.0;
  for (const auto& c : x) fx += std::min<double>(static_cast<double>(c.size()), 20.0);
  for (const auto& c : y) fy += std::min<double>(static_cast<double>(c.size()), 20.0);
  const auto r = ppt::empirical_rubinstein(ppt::EmpiricalLaw(x), ppt::EmpiricalLaw(y),
                                           ppt::GroundMetricSpec::total_variation(), rng);
  EXPECT_GE(r.estimate + 1e-12, 2.0 * (fy - fx) / 500.0);
  EXPECT_GT(r.bootstrap_se, 0.0);
}

TEST(EmpiricalRubinstein, DownsamplesLargerLaw) {
  Rng rng(70);
  const ppt::EmpiricalLaw a(poisson_samples(1.0, 40, rng)), b(poisson_samples(1.0, 25, rng));
  const auto r = ppt::empirical_rubinstein(a, b, ppt::GroundMetricSpec::total_variation(), rng);
  EXPECT_EQ(r.n, 25u);
}

TEST(EmpiricalRubinstein, PropagatesInfiniteEntry) {
  Rng rng(71);
  const ppt::EmpiricalLaw a({ppt::Configuration::from_times({0.1})}), b({ppt::Configuration{}});
  try {
    ppt::empirical_rubinstein(a, b, ppt::GroundMetricSpec::matching(1.0), rng);
    FAIL();
  } catch (const ppt::Error& e) {
    EXPECT_EQ(e.code(), ppt::Errc::infinite_entry);
  }
}

TEST(Csv, CostRoundTripAndPlan) {
  Eigen::MatrixXd c(2, 3);
  c << 0.1, 2, 1.0 / 3.0, 4, std::numeric_limits<double>::infinity(), 0;
  std::stringstream ss;
  ppt::write_cost_csv(ss, c);
  const auto back = ppt::read_cost_csv(ss);
  ASSERT_EQ(back.rows(), 2);
  ASSERT_EQ(back.cols(), 3);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(back(i, j), c(i, j));

  std::stringstream bad("1,2\n3\n");
  EXPECT_THROW(ppt::read_cost_csv(bad), ppt::Error);

  std::stringstream plan;
  ppt::write_plan_csv(plan, {{0, 1, 0.25}, {1, 0, 0.75}});
  EXPECT_EQ(plan.str(), "i,j,mass\n0,1,0.25\n1,0,0.75\n");
}
