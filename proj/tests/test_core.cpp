#include "doctest.h"
#include "helpers.hpp"

using namespace moalign;

TEST_CASE("WeightVector::make normalizes and passes one-hots through") {
  auto onehot = WeightVector::make({1.0, 0.0, 0.0});
  CHECK(onehot.values() == std::vector<double>{1.0, 0.0, 0.0});
  std::size_t which = 99;
  CHECK(onehot.is_one_hot(&which));
  CHECK(which == 0);

  auto thirds = WeightVector::make({1.0, 1.0, 1.0});
  CHECK(thirds[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(thirds[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(thirds[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  auto half = WeightVector::make({2.0, 2.0});
  CHECK(half[0] == 0.5);
  CHECK(half[1] == 0.5);
  CHECK_FALSE(half.is_one_hot());
}

TEST_CASE("WeightVector rejects bad inputs") {
  CHECK_THROWS_AS(WeightVector::make({}), std::invalid_argument);
  CHECK_THROWS_AS(WeightVector::make({0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(WeightVector::make({1.0, -0.5}), std::invalid_argument);
  CHECK_THROWS_AS(WeightVector::one_hot(3, 3), std::invalid_argument);
  CHECK_THROWS_AS(WeightVector::uniform(0), std::invalid_argument);
}

TEST_CASE("WeightVector sums to 1 on random non-negative inputs") {
  Rng rng(11);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int rep = 0; rep < 200; ++rep) {
    std::size_t n = 1 + rng() % 6;
    std::vector<double> vals(n);
    double total = 0.0;
    for (double& v : vals) {
      v = u(rng);
      total += v;
    }
    if (total <= 0.0) continue;
    auto w = WeightVector::make(vals);
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(w[i] >= 0.0);
      sum += w[i];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("drop_component preserves order and length") {
  auto w = WeightVector::make({0.2, 0.3, 0.5});
  CHECK(w.drop_component(1) == std::vector<double>{0.2, 0.5});
  CHECK(WeightVector::one_hot(3, 0).drop_component(0) ==
        std::vector<double>{0.0, 0.0});
  CHECK(WeightVector::uniform(4).drop_component(3) ==
        std::vector<double>{0.25, 0.25, 0.25});
  CHECK_THROWS_AS(w.drop_component(3), std::invalid_argument);
}

TEST_CASE("FeatureVector enforces the norm bound") {
  CHECK_NOTHROW(FeatureVector({0.6, 0.8}));
  CHECK_THROWS_AS(FeatureVector({1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("RewardParameters enforces centering and the norm bound") {
  CHECK_NOTHROW(RewardParameters({0.5, -0.5}, 1.0));
  CHECK_THROWS_AS(RewardParameters({0.5, 0.5}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(RewardParameters({2.0, -2.0}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(RewardParameters({0.0, 0.0}, 0.0), std::invalid_argument);
}

TEST_CASE("PreferencePair rejects chosen == rejected in all attempts") {
  Rng rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    int x = static_cast<int>(rng() % 50);
    int y = static_cast<int>(rng() % 50);
    CHECK_THROWS_AS(PreferencePair(x, y, y, 0, 1.0, 0.0),
                    std::invalid_argument);
  }
  CHECK_NOTHROW(PreferencePair(0, 1, 2, 0, 1.0, 0.0));
}

TEST_CASE("PreferenceDataset rejects mixed objectives") {
  std::vector<PreferencePair> pairs;
  pairs.emplace_back(0, 0, 1, 0, 1.0, 0.0);
  pairs.emplace_back(0, 1, 2, 1, 1.0, 0.0);
  CHECK_THROWS_AS(PreferenceDataset(0, pairs), std::invalid_argument);
}

TEST_CASE("Hyperparameters validation") {
  Hyperparameters hp;
  CHECK_NOTHROW(hp.validate());
  hp.iterations = 0;  // a zero-iteration run means evaluate the start policy
  CHECK_NOTHROW(hp.validate());

  Hyperparameters bad = Hyperparameters{};
  bad.beta = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = Hyperparameters{};
  bad.delta = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = Hyperparameters{};
  bad.lambda = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = Hyperparameters{};
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
