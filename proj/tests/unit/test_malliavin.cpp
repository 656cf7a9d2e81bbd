#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ppt/engine.hpp"
#include "ppt/malliavin.hpp"
#include "ppt/validate.hpp"

using ppt::CountVector;
using ppt::Engine;
using ppt::FiniteCarrierModel;
using ppt::Rng;

namespace {

double poisson_pmf(int k, double mean) { return std::exp(-mean + k * std::log(mean) - std::lgamma(k + 1.0)); }

Eigen::VectorXd random_values(std::size_t n, Rng& rng) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = 2.0 * rng.uniform() - 1.0;
  return v;
}

double interior_sup(const FiniteCarrierModel& m, const Eigen::VectorXd& v, int margin) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.state_count(); ++i)
    if (m.interior(i, margin)) s = std::max(s, std::abs(v(static_cast<Eigen::Index>(i))));
  return s;
}

struct Wave {
  double a, b;
  double operator()(std::span<const int> k) const {
    double v = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) v += std::sin(a * k[i] + b * static_cast<double>(i + 1));
    return v;
  }
};

}  // namespace

TEST(Engine, GeneratorMatchesDenseOracle) {
  const FiniteCarrierModel model({0.7, 1.3}, 6);
  const Engine engine(model);
  const Eigen::MatrixXd sparse = Eigen::MatrixXd(engine.generator());
  EXPECT_EQ((sparse - oracle::dense_generator(model)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Engine, StateSpaceLimit) {
  EXPECT_THROW(Engine(FiniteCarrierModel({1, 1, 1, 1}, 40)), ppt::Error);
}

TEST(Engine, GeneratorKillsConstantsAndFixesFirstChaos) {
  const double rho = 1.7;
  const Engine engine(FiniteCarrierModel({rho}, 30));
  const auto c = engine.tabulate([](const CountVector&) { return 3.0; });
  EXPECT_LE(engine.apply_generator(c).values().cwiseAbs().maxCoeff(), 1e-14);
  const auto f = engine.tabulate([&](const CountVector& k) { return k[0] - rho; });
  const auto lf = engine.apply_generator(f);
  for (int k = 0; k < 30; ++k) EXPECT_NEAR(lf.at_index(static_cast<std::size_t>(k)), k - rho, 1e-12);
}

TEST(Charlier, OrderZeroAndOrthogonality) {
  for (int k = 0; k < 10; ++k) EXPECT_EQ(ppt::charlier_eval(0, k, 1.3), 1.0);
  const double theta = 1.5;
  double s23 = 0.0, s22 = 0.0;
  for (int k = 0; k <= 60; ++k) {
    s23 += ppt::charlier_eval(2, k, theta) * ppt::charlier_eval(3, k, theta) * poisson_pmf(k, theta);
    s22 += ppt::charlier_eval(2, k, theta) * ppt::charlier_eval(2, k, theta) * poisson_pmf(k, theta);
  }
  EXPECT_NEAR(s23, 0.0, 1e-9);
  EXPECT_NEAR(s22, 2.0 * theta * theta, 1e-9);  // monic norm n! theta^n
}

TEST(Charlier, EigenRelation) {
  for (double theta : {0.5, 2.0, 4.0})
    for (int n = 0; n <= 5; ++n)
      for (int k = 1; k < 30; ++k) {
        const double c = ppt::charlier_eval(n, k, theta);
        const double lc = theta * (c - ppt::charlier_eval(n, k + 1, theta)) +
                          k * (c - ppt::charlier_eval(n, k - 1, theta));
        ASSERT_NEAR(lc, n * c, 1e-8 * std::max(1.0, std::abs(c))) << theta << ' ' << n << ' ' << k;
      }
}

TEST(ChaosEigencheck, Examples) {
  const Engine one(FiniteCarrierModel({2.0}, 50));
  const auto r1 = ppt::chaos_eigencheck(one);
  EXPECT_EQ(r1.entries.front().eigenvalue, 0);
  EXPECT_EQ(r1.entries.front().residual, 0.0);
  EXPECT_EQ(r1.entries[3].eigenvalue, 3);
  EXPECT_LT(r1.entries[3].residual, 1e-8);

  const Engine two(FiniteCarrierModel({0.5, 1.5}, 40));
  const auto r2 = ppt::chaos_eigencheck(two);
  bool seen = false;
  for (const auto& e : r2.entries)
    if (e.orders == std::vector<int>{1, 2}) {
      seen = true;
      EXPECT_EQ(e.eigenvalue, 3);
      EXPECT_LT(e.residual, 1e-8);
    }
  EXPECT_TRUE(seen);
  EXPECT_THROW(ppt::chaos_eigencheck(Engine(FiniteCarrierModel({1.0}, 20))), ppt::Error);
}

TEST(Semigroup, ChaosDecayAndResolventSpectrum) {
  const FiniteCarrierModel model({2.0}, 60);
  const Engine engine(model);
  const std::vector<int> zero{0};
  const auto f0 = ppt::chaos_table(model, zero);
  EXPECT_EQ(engine.semigroup(f0, 0.0).values(), f0.values());
  for (int n = 0; n <= 4; ++n) {
    const std::vector<int> orders{n};
    const auto c = ppt::chaos_table(model, orders);
    for (double t : {0.1, 1.0, 3.0}) {
      const Eigen::VectorXd pc = engine.semigroup(c, t).values();
      EXPECT_LT(ppt::interior_relative_gap(model, pc, std::exp(-n * t) * c.values(), c.values(), 30), 1e-9);
    }
    const Eigen::VectorXd rc = ppt::exact_resolvent(engine, c).values();
    EXPECT_LT(ppt::interior_relative_gap(model, rc, c.values() / (1.0 + n), c.values(), 30), 1e-9) << n;
  }
}

TEST(Semigroup, SemigroupLawsPositivityConstants) {
  const FiniteCarrierModel model({0.5, 1.5}, 25);
  const Engine engine(model);
  Rng rng(41);
  const Eigen::VectorXd f = random_values(model.state_count(), rng);
  const Eigen::VectorXd both = engine.semigroup_values(engine.semigroup_values(f, 0.4), 0.9);
  EXPECT_LE((both - engine.semigroup_values(f, 1.3)).cwiseAbs().maxCoeff(), 1e-9);

  const Eigen::VectorXd pos = f.cwiseAbs();
  EXPECT_GE(engine.semigroup_values(pos, 0.7).minCoeff(), 0.0);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(f.size());
  EXPECT_LE((engine.semigroup_values(ones, 2.0) - ones).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Semigroup, Ergodicity) {
  const FiniteCarrierModel model({0.5, 1.5}, 40);
  const Engine engine(model);
  Rng rng(42);
  const auto f = engine.table(random_values(model.state_count(), rng));
  const double mean = engine.expectation(f);
  const Eigen::VectorXd p30 = engine.semigroup(f, 30.0).values();
  const Eigen::VectorXd dev = p30.array() - mean;
  EXPECT_LT(interior_sup(model, dev, 20), 1e-8);
}

TEST(Semigroup, Commutation) {
  for (const auto& weights : {std::vector<double>{2.0}, std::vector<double>{0.5, 1.5}}) {
    const Engine engine(FiniteCarrierModel(weights, weights.size() == 1 ? 60 : 40));
    const auto r = ppt::validate_commutation(engine, ppt::ValidationOptions{});
    EXPECT_EQ(r.status, ppt::SuiteStatus::pass) << r.max_error;
    EXPECT_LT(r.max_error, 1e-8);
  }
}

TEST(Gradient, LipschitzFunctionalsHaveBoundedGradient) {
  const FiniteCarrierModel model({0.8, 1.1}, 15);
  const Engine engine(model);
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const double c = 0.1 + rng.uniform();
    std::vector<CountVector> net;
    for (int j = 0; j < 4; ++j)
      net.push_back({static_cast<int>(rng.uniform() * 16), static_cast<int>(rng.uniform() * 16)});
    // c/2 times the d1-distance to a finite net; adding a point moves d1 by at most 2.
    const auto f = engine.tabulate([&](const CountVector& k) {
      double best = INFINITY;
      for (const auto& x : net) best = std::min(best, ppt::d1_distance(k, x));
      return 0.5 * c * best;
    });
    for (std::size_t i = 0; i < 2; ++i)
      EXPECT_LE(engine.gradient(f, i).values().cwiseAbs().maxCoeff(), c + 1e-12);
  }
}

TEST(Girsanov, EngineDensityIsPoissonRatio) {
  const FiniteCarrierModel model({0.6, 1.4}, 20);
  const std::vector<double> h{1.7, 0.4};
  const auto L = ppt::girsanov_table(model, h);
  for (std::size_t s = 0; s < model.state_count(); ++s) {
    const auto k = model.counts(s);
    double ratio = 1.0;
    for (std::size_t i = 0; i < 2; ++i)
      ratio *= poisson_pmf(k[i], h[i] * model.weight(i)) / poisson_pmf(k[i], model.weight(i));
    ASSERT_NEAR(L.at_index(s), ratio, 1e-12 * ratio);
  }
}

TEST(Girsanov, EngineMoments) {
  const FiniteCarrierModel model({0.6, 1.4}, 40);
  const Engine engine(model);
  const std::vector<double> h{1.7, 0.4};
  const auto L = ppt::girsanov_table(model, h);
  EXPECT_NEAR(engine.expectation(L), 1.0, 1e-10);
  const double chi = 0.6 * 0.49 + 1.4 * 0.36;
  EXPECT_NEAR(engine.reference_law().dot(L.values().cwiseAbs2()), std::exp(chi), 1e-10);
}

TEST(Girsanov, ContinuousExamples) {
  const auto w = ppt::Window::horizon(1.0);
  const ppt::GirsanovDensity same(ppt::IntensityFunction::constant(1.0), 1.0, w);
  EXPECT_EQ(same(ppt::Configuration::from_times({0.2, 0.9})), 1.0);
  const auto lin = ppt::IntensityFunction::callable([](const ppt::Point& p) { return 1.0 + p[0]; }, 2.0, 8);
  EXPECT_NEAR(ppt::girsanov_density(ppt::Configuration{}, lin, 1.0, w), std::exp(-0.5), 1e-14);
}

TEST(Girsanov, MonteCarloMoments) {
  const auto w = ppt::Window::horizon(1.0);
  const auto lin = ppt::IntensityFunction::callable([](const ppt::Point& p) { return 1.0 + p[0]; }, 2.0, 8);
  const ppt::GirsanovDensity L(lin, 1.0, w);
  const ppt::ContinuousCarrier carrier{w, 1.0};
  Rng rng(44);
  ppt::RunningStats m1, m2;
  for (int i = 0; i < 100000; ++i) {
    const double l = L(carrier.sample_reference(rng));
    m1.add(l);
    m2.add(l * l);
  }
  EXPECT_LE(std::abs(m1.mean() - 1.0), 3 * m1.std_error());
  EXPECT_LE(std::abs(m2.mean() - std::exp(1.0 / 3.0)), 3 * m2.std_error());
}

TEST(DiscreteGradient, Examples) {
  const auto w = ppt::Configuration::from_times({0.1, 0.4});
  auto count = [](const ppt::Configuration& c) { return static_cast<double>(c.size()); };
  EXPECT_EQ(ppt::discrete_gradient(count, w, ppt::Point(0.7)), 1.0);
  EXPECT_EQ(ppt::discrete_gradient([](const ppt::Configuration&) { return 5.0; }, w, ppt::Point(0.7)), 0.0);

  const auto win = ppt::Window::horizon(1.0);
  const auto lin = ppt::IntensityFunction::callable([](const ppt::Point& p) { return 1.0 + p[0]; }, 2.0, 8);
  const ppt::GirsanovDensity L(lin, 1.0, win);
  for (double s : {0.0, 0.3, 0.8}) {
    const double g = ppt::discrete_gradient(L, w, ppt::Point(s));
    EXPECT_NEAR(g, s * L(w), 1e-14);  // (h(s) - 1) L
  }
}

TEST(OuSemigroupMc, TimeZeroAndErgodicLimit) {
  const auto win = ppt::Window::horizon(1.0);
  const ppt::ContinuousCarrier carrier{win, 2.0};
  auto f = [](const ppt::Configuration& c) { return std::min<double>(static_cast<double>(c.size()), 3.0); };
  const auto w = ppt::Configuration::from_times({0.1, 0.2, 0.3, 0.4, 0.5});
  Rng rng(45);
  const auto at0 = ppt::ou_semigroup_mc(f, w, 0.0, carrier, 100, rng);
  EXPECT_EQ(at0.mean, 3.0);
  EXPECT_EQ(at0.std_error, 0.0);

  const auto late = ppt::ou_semigroup_mc(f, w, 20.0, carrier, 50000, rng);
  ppt::RunningStats plain;
  for (int i = 0; i < 50000; ++i) plain.add(f(carrier.sample_reference(rng)));
  const double se = std::hypot(late.std_error, plain.std_error());
  EXPECT_LE(std::abs(late.mean - plain.mean()), 3 * se);
}

TEST(OuSemigroupMc, MatchesExactEngine) {
  const FiniteCarrierModel model({0.5, 1.5}, 40);
  const Engine engine(model);
  const ppt::AtomCarrier carrier(model);
  Rng rng(46);
  for (int trial = 0; trial < 10; ++trial) {
    const Wave f{0.3 + rng.uniform(), rng.uniform()};
    const CountVector w{static_cast<int>(rng.uniform() * 4), static_cast<int>(rng.uniform() * 5)};
    const double t = 0.05 + 2.0 * rng.uniform();
    const double exact = engine.semigroup(engine.tabulate(f), t)(w);
    const auto est = ppt::ou_semigroup_mc(f, w, t, carrier, 20000, rng);
    EXPECT_LE(std::abs(est.mean - exact), 3 * est.std_error) << trial;
  }
}

TEST(ResolventMc, Examples) {
  const auto win = ppt::Window::horizon(1.0);
  const ppt::ContinuousCarrier carrier{win, 1.5};
  Rng rng(47);
  const auto w = ppt::Configuration::from_times({0.3, 0.6, 0.65});
  const auto c = ppt::resolvent_mc([](const ppt::Configuration&) { return 2.5; }, w, carrier, 1000, rng);
  EXPECT_EQ(c.mean, 2.5);
  EXPECT_EQ(c.std_error, 0.0);

  // First chaos: the resolvent halves it.
  auto first = [](const ppt::Configuration& x) { return static_cast<double>(x.size()) - 1.5; };
  const auto r = ppt::resolvent_mc(first, w, carrier, 100000, rng);
  EXPECT_LE(std::abs(r.mean - first(w) / 2.0), 3 * r.std_error);
}

TEST(ResolventMc, MatchesExactEngine) {
  const Engine engine(FiniteCarrierModel({2.0}, 60));
  ppt::ValidationOptions opt;
  opt.mc_samples = 100000;
  const auto r = ppt::validate_resolvent_mc(engine, opt);
  EXPECT_EQ(r.status, ppt::SuiteStatus::pass) << r.detail.dump();
}
