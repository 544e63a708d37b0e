#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stpp/simulate.hpp"
#include "support/oracles.hpp"

using namespace stpp;

TEST_CASE("poisson parameter validation") {
  CHECK_THROWS_AS(simulate_poisson(0.0, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(simulate_poisson(1.0, -1.0, 1), std::invalid_argument);
}

TEST_CASE("poisson mean count within 3 sigma of rate * horizon") {
  const int runs = 10000;
  std::vector<double> counts;
  counts.reserve(runs);
  for (int i = 0; i < runs; ++i)
    counts.push_back(static_cast<double>(simulate_poisson(2.0, 5.0, 1000 + i).size()));
  const auto mv = oracles::mean_var(counts);
  const double sigma_mean = std::sqrt(mv.var / runs);
  CHECK(std::fabs(mv.mean - 10.0) <= 3.0 * sigma_mean);
}

TEST_CASE("poisson degenerate rate gives empty sequences") {
  int total = 0;
  for (int i = 0; i < 50; ++i) total += static_cast<int>(simulate_poisson(1e-9, 1.0, i).size());
  CHECK(total == 0);
}

TEST_CASE("generators are deterministic under a fixed seed") {
  const EventSequence a = simulate_poisson(3.0, 4.0, 99);
  const EventSequence b = simulate_poisson(3.0, 4.0, 99);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.events[i].t == b.events[i].t);

  HawkesParams hp{1.0, {{0.5, 1.0}}, 20.0};
  const EventSequence h1 = simulate_hawkes(hp, 7);
  const EventSequence h2 = simulate_hawkes(hp, 7);
  REQUIRE(h1.size() == h2.size());
  for (std::size_t i = 0; i < h1.size(); ++i) CHECK(h1.events[i].t == h2.events[i].t);

  const EventSequence s1 = simulate_self_correcting(0.5, 0.4, 10.0, 3);
  const EventSequence s2 = simulate_self_correcting(0.5, 0.4, 10.0, 3);
  REQUIRE(s1.size() == s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1.events[i].t == s2.events[i].t);
}

TEST_CASE("hawkes with zero weights matches the poisson mean") {
  HawkesParams p{2.0, {{0.0, 1.0}}, 5.0};
  const int runs = 4000;
  std::vector<double> counts;
  for (int i = 0; i < runs; ++i)
    counts.push_back(static_cast<double>(simulate_hawkes(p, 40000 + i).size()));
  const auto mv = oracles::mean_var(counts);
  const double sigma_mean = std::sqrt(mv.var / runs);
  CHECK(std::fabs(mv.mean - 10.0) <= 3.0 * sigma_mean);
}

TEST_CASE("hawkes mean count matches the renewal-equation oracle") {
  // exact E[N] for a single subcritical kernel, integrated in closed form
  const double mu = 1.0, a = 0.5, b = 1.0, T = 30.0;
  HawkesParams p{mu, {{a, b}}, T};
  const int runs = 10000;
  std::vector<double> counts;
  for (int i = 0; i < runs; ++i)
    counts.push_back(static_cast<double>(simulate_hawkes(p, 90000 + i).size()));
  const auto mv = oracles::mean_var(counts);
  const double sigma_mean = std::sqrt(mv.var / runs);
  const double expected = oracles::hawkes_expected_count(mu, a, b, T);
  CHECK(std::fabs(mv.mean - expected) <= 3.0 * sigma_mean);
}

TEST_CASE("time-rescaled hawkes intervals pass a KS test against Exp(1)") {
  // reference parameters: base 0.2, kernels (0.2, 0.2) and (4, 10).
  // Long windows keep the count of censored (window-end) intervals negligible;
  // pooling many short windows biases the rescaled intervals short.
  HawkesParams p = reference_hawkes_params(40.0);
  std::vector<double> u;
  int seed = 0;
  while (u.size() < 10000) {
    const EventSequence seq = simulate_hawkes(p, 7000 + seed++);
    for (double xi : oracles::hawkes_rescaled_intervals(seq, p))
      u.push_back(1.0 - std::exp(-xi));
  }
  CHECK(oracles::ks_uniform_pvalue(u) > 0.01);
}

TEST_CASE("self-correcting with tiny alpha matches the exponential-rate integral") {
  const double mu = 0.5, T = 8.0;
  const int runs = 10000;
  std::vector<double> counts;
  for (int i = 0; i < runs; ++i)
    counts.push_back(
        static_cast<double>(simulate_self_correcting(mu, 1e-10, T, 50000 + i).size()));
  const auto mv = oracles::mean_var(counts);
  const double sigma_mean = std::sqrt(mv.var / runs);
  const double expected = (std::exp(mu * T) - 1.0) / mu;  // inhomogeneous Poisson count
  CHECK(std::fabs(mv.mean - expected) <= 3.0 * sigma_mean);
}

TEST_CASE("self-correcting with strong inhibition spaces events regularly") {
  std::vector<double> taus;
  for (int i = 0; i < 200; ++i) {
    const EventSequence s = simulate_self_correcting(1.0, 2.0, 40.0, 600 + i);
    for (double tau : intervals(s)) taus.push_back(tau);
  }
  const auto mv = oracles::mean_var(taus);
  CHECK(std::sqrt(mv.var) / mv.mean < 1.0);  // coefficient of variation below Poisson
}

TEST_CASE("self-correcting rejects nonpositive parameters") {
  CHECK_THROWS_AS(simulate_self_correcting(0.0, 1.0, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(simulate_self_correcting(1.0, 0.0, 1.0, 1), std::invalid_argument);
}

TEST_CASE("hawkes_gmm near-degenerate component pins locations to its mean") {
  HawkesGmmParams p;
  p.temporal = {1.0, {{0.5, 1.0}}, 50.0};
  p.spatial.components = {{1.0, {3.0, -2.0}, {{1e-12, 0.0}, {0.0, 1e-12}}}};
  const EventSequence s = simulate_hawkes_gmm(p, 11);
  REQUIRE(s.size() > 5);
  for (const Event& e : s.events) {
    CHECK(e.coords[0] == doctest::Approx(3.0).epsilon(1e-3));
    CHECK(e.coords[1] == doctest::Approx(-2.0).epsilon(1e-3));
  }
}

TEST_CASE("hawkes_gmm symmetric components balance around the origin") {
  HawkesGmmParams p;
  p.temporal = {1.0, {{0.5, 1.0}}, 60.0};
  p.spatial.components = {{0.5, {5.0, 0.0}, {{1.0, 0.0}, {0.0, 1.0}}},
                          {0.5, {-5.0, 0.0}, {{1.0, 0.0}, {0.0, 1.0}}}};
  std::vector<double> xs, ys;
  int seed = 0;
  while (xs.size() < 10000) {
    const EventSequence s = simulate_hawkes_gmm(p, 30000 + seed++);
    for (const Event& e : s.events) {
      xs.push_back(e.coords[0]);
      ys.push_back(e.coords[1]);
    }
  }
  const auto mx = oracles::mean_var(xs);
  const auto my = oracles::mean_var(ys);
  CHECK(std::fabs(mx.mean) <= 3.0 * std::sqrt(mx.var / xs.size()) +
                                  0.3);  // burst clustering inflates the effective sigma
  CHECK(std::fabs(my.mean) <= 3.0 * std::sqrt(my.var / ys.size()) + 0.3);
}

TEST_CASE("hawkes_gmm sample covariance matches the reference gaussian within 5%") {
  HawkesGmmParams p;
  p.temporal = {2.0, {{0.5, 1.0}}, 100.0};
  p.spatial = GmmSpatialParams::single_gaussian_default();
  std::vector<double> xs, ys;
  int seed = 0;
  while (xs.size() < 100000) {
    const EventSequence s = simulate_hawkes_gmm(p, 500000 + seed++);
    for (const Event& e : s.events) {
      xs.push_back(e.coords[0]);
      ys.push_back(e.coords[1]);
    }
  }
  const auto mx = oracles::mean_var(xs);
  const auto my = oracles::mean_var(ys);
  double cov = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) cov += (xs[i] - mx.mean) * (ys[i] - my.mean);
  cov /= static_cast<double>(xs.size());
  CHECK(mx.var == doctest::Approx(2.0).epsilon(0.05));
  CHECK(my.var == doctest::Approx(4.0).epsilon(0.05));
  CHECK(cov == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("independent dataset: spatial means, independence, temporal law") {
  IndependentConfig c = IndependentConfig::defaults();
  c.temporal.horizon = 12.0;
  c.n_train = 6000;
  c.n_val = 10;
  c.n_test = 10;
  const Dataset ds = simulate_independent(c, 99);

  std::vector<double> xs, ys, taus;
  for (const EventSequence& s : ds.train) {
    const auto tv = intervals(s);
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      xs.push_back(s.events[i].coords[0]);
      ys.push_back(s.events[i].coords[1]);
      taus.push_back(tv[i]);
    }
  }
  REQUIRE(xs.size() > 100000);

  const auto mx = oracles::mean_var(xs);
  const auto my = oracles::mean_var(ys);
  CHECK(std::fabs(mx.mean - 4.0) < 0.1);
  CHECK(std::fabs(my.mean - 7.0) < 0.1);

  CHECK(std::fabs(oracles::correlation(taus, xs)) < 0.02);
  CHECK(std::fabs(oracles::correlation(taus, ys)) < 0.02);

  // temporal stream alone: long windows avoid the censoring bias above
  IndependentConfig lc = IndependentConfig::defaults();
  lc.temporal.horizon = 40.0;
  lc.n_train = 40;
  lc.n_val = 1;
  lc.n_test = 1;
  const Dataset lds = simulate_independent(lc, 31);
  std::vector<double> rescaled_u;
  for (const EventSequence& s : lds.train)
    for (double xi : oracles::hawkes_rescaled_intervals(s, lc.temporal))
      rescaled_u.push_back(1.0 - std::exp(-xi));
  REQUIRE(rescaled_u.size() > 5000);
  CHECK(oracles::ks_uniform_pvalue(rescaled_u) > 0.01);
}
