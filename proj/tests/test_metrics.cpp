#include <doctest.h>

#include <cmath>
#include <random>

#include "caref/metrics.hpp"

using namespace caref;

TEST_CASE("effective_support endpoints") {
  const std::vector<double> onehot{1.0, 0.0, 0.0, 0.0};
  CHECK(effective_support(onehot) == 1.0);

  const std::vector<double> uniform(8, 0.125);
  CHECK(effective_support(uniform) == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(effective_support(uniform) <= 8.0);  // clamped into [1, |V|]

  std::mt19937_64 rng(441);
  std::uniform_real_distribution<double> dist(0.01, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(6);
    double sum = 0.0;
    for (double& x : p) {
      x = dist(rng);
      sum += x;
    }
    for (double& x : p) x /= sum;
    const double support = effective_support(p);
    CHECK(support >= 1.0);
    CHECK(support <= 6.0);
  }

  CHECK_THROWS_AS(effective_support(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("topk_mass") {
  const std::vector<double> p{0.5, 0.1, 0.3, 0.1};
  CHECK(topk_mass(p, 1) == 0.5);
  CHECK(topk_mass(p, 2) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(topk_mass(p, 4) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(topk_mass(p, 0), std::invalid_argument);
  CHECK_THROWS_AS(topk_mass(p, 5), std::invalid_argument);
}

TEST_CASE("argmax_lowest breaks ties downward") {
  CHECK(argmax_lowest(std::vector<double>{0.3, 0.4, 0.4}) == 1);
  CHECK(argmax_lowest(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == 0);
  CHECK(argmax_lowest(std::vector<double>{0.1, 0.2, 0.7}) == 2);
  CHECK_THROWS_AS(argmax_lowest(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("report on perfectly confident correct predictions") {
  std::vector<ScoredPrediction> items;
  for (int i = 0; i < 5; ++i) {
    ScoredPrediction item;
    item.probs.assign(8, 0.0);
    item.probs[static_cast<std::size_t>(i)] = 1.0;
    item.predicted = i;
    item.gold = i;
    items.push_back(item);
  }
  const MetricsReport r = report(items, 3);
  CHECK(r.accuracy == 1.0);
  CHECK(r.mean_entropy == 0.0);
  CHECK(r.mean_effective_support == 1.0);
  CHECK(r.mean_topk_mass == 1.0);
  CHECK(r.topk == 3);
  CHECK(r.n_items == 5);
}

TEST_CASE("report on uniform predictive rows") {
  std::mt19937_64 rng(442);
  const int vocab = 16;
  std::vector<ScoredPrediction> items;
  int hits = 0;
  for (int i = 0; i < 512; ++i) {
    ScoredPrediction item;
    item.probs.assign(vocab, 1.0 / vocab);
    item.predicted = argmax_lowest(item.probs);  // always 0 on a flat row
    item.gold = static_cast<int>(rng() % vocab);
    hits += item.predicted == item.gold ? 1 : 0;
    items.push_back(item);
  }
  const MetricsReport r = report(items, 5);
  CHECK(r.accuracy == doctest::Approx(hits / 512.0).epsilon(1e-15));
  CHECK(r.mean_entropy == doctest::Approx(std::log(16.0)).epsilon(1e-12));
  CHECK(r.mean_effective_support == doctest::Approx(16.0).epsilon(1e-12));
  CHECK(r.mean_topk_mass == doctest::Approx(5.0 / 16.0).epsilon(1e-12));
  CHECK(r.mean_kl_uniform == doctest::Approx(0.0).epsilon(1e-12));

  // Flat rows predict at chance: the hit rate sits within 3 binomial sigma
  // of 1/|V|.
  const double p0 = 1.0 / vocab;
  const double sigma = std::sqrt(p0 * (1 - p0) / 512.0);
  CHECK(std::fabs(r.accuracy - p0) <= 3 * sigma);
}

TEST_CASE("report input validation") {
  CHECK_THROWS_AS(report(std::vector<ScoredPrediction>{}, 5), std::invalid_argument);

  ScoredPrediction a;
  a.probs = {0.5, 0.5};
  a.predicted = 0;
  a.gold = 0;
  ScoredPrediction b = a;
  b.probs = {0.25, 0.25, 0.5};
  CHECK_THROWS_AS(report(std::vector<ScoredPrediction>{a, b}, 1), std::invalid_argument);

  b = a;
  b.gold = 7;
  CHECK_THROWS_AS(report(std::vector<ScoredPrediction>{a, b}, 1), std::out_of_range);

  CHECK_THROWS_AS(report(std::vector<ScoredPrediction>{a}, 3), std::invalid_argument);
}
