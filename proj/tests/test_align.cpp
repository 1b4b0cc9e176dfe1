#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

using namespace moalign;
using testutil::make_env;
using testutil::max_grad_error;
using testutil::random_dataset;
using testutil::random_policy;
using testutil::small_env;

namespace {

double neg_log_sigmoid(double z) { return std::log1p(std::exp(-z)); }

// One prompt, two orthogonal unit-feature responses; feature difference (1,-1).
Environment pair_env(int n_objectives) {
  std::vector<std::vector<double>> thetas(
      static_cast<std::size_t>(n_objectives), {0.5, -0.5});
  return make_env({{{1.0, 0.0}, {0.0, 1.0}}}, std::move(thetas));
}

PreferenceDataset single_pair(int objective) {
  std::vector<PreferencePair> pairs;
  pairs.emplace_back(0, 0, 1, objective, 1.0, 0.0);
  return PreferenceDataset(objective, std::move(pairs));
}

}  // namespace

TEST_CASE("bt_probability identities") {
  CHECK(bt_probability(1.0, 1.0) == 0.5);
  CHECK(bt_probability(std::log(3.0), 0.0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(bt_probability(0.7, -0.2) + bt_probability(-0.2, 0.7) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bt_probability(0.5, 0.0) > bt_probability(0.2, 0.0));  // increasing in r_w
  CHECK(bt_probability(10.0, -10.0) < 1.0);
  CHECK(bt_probability(10.0, -10.0) > 0.0);
  CHECK_THROWS_AS(bt_probability(std::nan(""), 0.0), std::invalid_argument);
}

TEST_CASE("sample_preference_label follows the Bradley-Terry frequencies") {
  // Reward gap ln 3 between responses 0 and 1; response 2 duplicates 0.
  const double a = 1.0 / std::sqrt(2.0);
  const double t = std::log(3.0) / std::sqrt(2.0);
  Environment env = make_env({{{a, -a}, {0.0, 0.0}, {a, -a}}}, {{t, -t}}, 2.0);

  Rng rng(11);
  int wins = 0;
  for (int i = 0; i < 10000; ++i)
    wins += sample_preference_label(env, 0, 0, 0, 1, rng).first == 0;
  double sigma = std::sqrt(10000 * 0.75 * 0.25);
  CHECK(std::abs(wins - 7500.0) <= 3.0 * sigma);

  Rng rng2(12);
  wins = 0;
  for (int i = 0; i < 10000; ++i)
    wins += sample_preference_label(env, 0, 0, 0, 2, rng2).first == 0;  // gap 0
  sigma = std::sqrt(10000 * 0.25);
  CHECK(std::abs(wins - 5000.0) <= 3.0 * sigma);

  Rng ra(5), rb(5);
  for (int i = 0; i < 50; ++i)
    CHECK(sample_preference_label(env, 0, 0, 0, 1, ra) ==
          sample_preference_label(env, 0, 0, 0, 1, rb));
  CHECK_THROWS_AS(sample_preference_label(env, 0, 0, 1, 1, ra),
                  std::invalid_argument);
}

TEST_CASE("dpo_loss at the reference is ln 2 regardless of the data") {
  Environment env = small_env(21, 4, 1, 5, 4);
  Rng rng(21);
  Policy ref = random_policy(rng, env.dim, 1);
  PreferenceDataset d = random_dataset(env, 0, 20, rng);
  LossResult r = dpo_loss(ref, ref, env, d, WeightVector::one_hot(1, 0), 0.5);
  CHECK(r.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("dpo_loss scalar oracle: log-ratio difference 0.6 at beta 0.5") {
  Environment env = pair_env(1);
  Policy ref(2, 1);
  Policy policy(2, 1);
  policy.base = {0.3, -0.3};  // logit difference 0.6 against the zero reference
  LossResult r = dpo_loss(policy, ref, env, single_pair(0),
                          WeightVector::one_hot(1, 0), 0.5);
  CHECK(r.value == doctest::Approx(neg_log_sigmoid(0.3)).epsilon(1e-12));
  CHECK(r.value == doctest::Approx(0.554355).epsilon(1e-5));

  PreferenceDataset empty(0, {});
  CHECK_THROWS_AS(dpo_loss(policy, ref, env, empty, WeightVector::one_hot(1, 0), 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(dpo_loss(policy, ref, env, single_pair(0),
                           WeightVector::one_hot(1, 0), 0.0),
                  std::invalid_argument);
}

TEST_CASE("dpo_loss gradient matches finite differences") {
  Rng rng(31);
  for (int rep = 0; rep < 5; ++rep) {
    Environment env = small_env(300 + rep, 3 + rep, 1, 4, 4);
    Policy policy = random_policy(rng, env.dim, 1);
    Policy ref = random_policy(rng, env.dim, 1);
    PreferenceDataset d = random_dataset(env, 0, 8, rng);
    WeightVector w = WeightVector::one_hot(1, 0);
    LossResult r = dpo_loss(policy, ref, env, d, w, 0.5);
    double err = max_grad_error(
        policy,
        [&](const Policy& p) { return dpo_loss(p, ref, env, d, w, 0.5).value; },
        r.grad);
    CHECK(err <= 1e-5);
  }
}

TEST_CASE("losses are invariant to per-prompt constant logit shifts") {
  Rng rng(44);
  Environment base = small_env(440, 4, 2, 5, 4);
  // Shrink all features, then add a per-prompt offset shared by every
  // candidate of that prompt; logit differences are unchanged.
  auto scaled = base;
  auto shifted = base;
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int x = 0; x < base.n_prompts; ++x) {
    std::vector<double> off(static_cast<std::size_t>(base.dim));
    for (double& v : off) v = u(rng);
    for (int y = 0; y < base.n_responses; ++y) {
      std::vector<double> f = base.phi[x][y].values;
      std::vector<double> g = f;
      for (int i = 0; i < base.dim; ++i) {
        f[i] *= 0.45;
        g[i] = f[i] + off[static_cast<std::size_t>(i)];
      }
      scaled.phi[x][y] = FeatureVector(std::move(f));
      shifted.phi[x][y] = FeatureVector(std::move(g));
    }
  }
  Policy policy = random_policy(rng, base.dim, 2);
  Policy ref = random_policy(rng, base.dim, 2);
  PreferenceDataset d = random_dataset(base, 0, 10, rng);
  WeightVector w = WeightVector::one_hot(2, 0);
  CHECK(dpo_loss(policy, ref, scaled, d, w, 0.5).value ==
        doctest::Approx(dpo_loss(policy, ref, shifted, d, w, 0.5).value)
            .epsilon(1e-12));

  MarginRewardModel m{1, random_policy(rng, base.dim, 2), ref, 0.5};
  CHECK(modpo_loss(policy, ref, scaled, d, WeightVector::make({0.5, 0.5}), {m}, 0.5)
            .value ==
        doctest::Approx(modpo_loss(policy, ref, shifted, d,
                                   WeightVector::make({0.5, 0.5}), {m}, 0.5)
                            .value)
            .epsilon(1e-11));
}

TEST_CASE("marginal reward is zero at initialization and shift-invariant") {
  Environment env = small_env(50, 4, 2, 5, 4);
  Rng rng(50);
  Policy ref = random_policy(rng, env.dim, 2);
  MarginRewardModel m{0, ref, ref, 0.5};
  for (int x = 0; x < env.n_prompts; ++x)
    for (int y = 0; y < env.n_responses; ++y)
      CHECK(m.reward(env, x, y) == 0.0);
}

TEST_CASE("modpo_loss scalar oracle and error cases") {
  Environment env = pair_env(2);
  Policy sft(2, 2);
  Policy policy(2, 2);
  policy.base = {0.15, -0.15};  // log-ratio difference 0.3 at any weight
  MarginRewardModel m1{1, Policy(2, 2), Policy(2, 2), 0.5};
  m1.trained.base = {0.2, 0.0};  // R_1 difference = 0.5 * 0.2 = 0.1
  WeightVector w = WeightVector::make({0.5, 0.5});
  LossResult r = modpo_loss(policy, sft, env, single_pair(0), w, {m1}, 0.5);
  CHECK(r.value == doctest::Approx(neg_log_sigmoid(0.2)).epsilon(1e-12));
  CHECK(r.value == doctest::Approx(0.598139).epsilon(1e-5));

  // Weight zero on the traversed dataset is undefined.
  CHECK_THROWS_AS(modpo_loss(policy, sft, env, single_pair(1), w, {m1}, 0.5),
                  std::invalid_argument);  // margin model for objective 0 missing
  WeightVector w0 = WeightVector::one_hot(2, 1);
  CHECK_THROWS_AS(modpo_loss(policy, sft, env, single_pair(0), w0, {m1}, 0.5),
                  std::invalid_argument);
}

TEST_CASE("modpo_loss reduces to dpo_loss at one-hot weights") {
  Rng rng(61);
  for (int rep = 0; rep < 5; ++rep) {
    Environment env = small_env(600 + rep, 4, 3, 5, 4);
    Policy policy = random_policy(rng, env.dim, 3);
    Policy sft = random_policy(rng, env.dim, 3);
    std::vector<MarginRewardModel> margins;
    for (int j = 0; j < 3; ++j)
      margins.push_back({j, random_policy(rng, env.dim, 3), sft, 0.5});
    for (int k = 0; k < 3; ++k) {
      PreferenceDataset d = random_dataset(env, k, 6, rng);
      WeightVector w = WeightVector::one_hot(3, k);
      double lhs = modpo_loss(policy, sft, env, d, w, margins, 0.5).value;
      double rhs = dpo_loss(policy, sft, env, d, w, 0.5).value;
      CHECK(std::abs(lhs - rhs) <= 1e-12);
    }
  }
}

TEST_CASE("modpo_loss gradient matches finite differences") {
  Rng rng(71);
  for (int rep = 0; rep < 5; ++rep) {
    Environment env = small_env(700 + rep, 4, 2, 5, 4);
    Policy policy = random_policy(rng, env.dim, 2);
    Policy sft = random_policy(rng, env.dim, 2);
    std::vector<MarginRewardModel> margins{
        {0, random_policy(rng, env.dim, 2), sft, 0.5},
        {1, random_policy(rng, env.dim, 2), sft, 0.5}};
    PreferenceDataset d = random_dataset(env, 0, 8, rng);
    WeightVector w = WeightVector::make({0.6, 0.4});
    LossResult r = modpo_loss(policy, sft, env, d, w, margins, 0.5);
    double err = max_grad_error(
        policy,
        [&](const Policy& p) {
          return modpo_loss(p, sft, env, d, w, margins, 0.5).value;
        },
        r.grad);
    CHECK(err <= 1e-5);
  }
}

TEST_CASE("train_margin_models: no-op at zero epochs, sign check after training") {
  Environment env = small_env(81, 4, 2, 10, 6);
  Rng rng(81);
  Policy ref = random_policy(rng, env.dim, 2);
  std::vector<PreferenceDataset> datasets{random_dataset(env, 0, 30, rng),
                                          random_dataset(env, 1, 30, rng)};
  TrainConfig tc;
  tc.epochs = 0;
  auto frozen = train_margin_models(env, ref, datasets, tc);
  REQUIRE(frozen.size() == 2);
  for (const auto& m : frozen)
    for (int x = 0; x < env.n_prompts; ++x)
      for (int y = 0; y < env.n_responses; ++y)
        CHECK(m.reward(env, x, y) == 0.0);

  tc.epochs = 40;
  tc.learning_rate = 0.2;
  TrainLog log;
  auto models = train_margin_models(env, ref, datasets, tc, &log);
  CHECK_FALSE(log.entries.empty());
  for (int k = 0; k < 2; ++k) {
    Rng held_rng(900 + k);
    PreferenceDataset held = random_dataset(env, k, 30, held_rng);
    double chosen = 0.0, rejected = 0.0;
    for (const auto& pr : held.pairs) {
      chosen += models[k].reward(env, pr.prompt, pr.chosen);
      rejected += models[k].reward(env, pr.prompt, pr.rejected);
    }
    CHECK(chosen / held.size() > rejected / held.size());
  }
}

TEST_CASE("training aborts on a non-finite loss") {
  // Logits overflow (two coordinates each near the double limit), so the very
  // first batch evaluates to a non-finite loss and the guard must fire.
  Environment env = make_env({{{0.7, -0.7}, {-0.7, 0.7}}}, {{0.5, -0.5}});
  Policy huge(2, 1);
  huge.base = {1.5e308, -1.5e308};
  Policy ref(2, 1);
  std::vector<PreferenceDataset> datasets{
      PreferenceDataset(0, {PreferencePair(0, 1, 0, 0, 1.0, 0.0)})};
  TrainConfig tc;
  tc.epochs = 1;
  CHECK_THROWS_AS(train_modpo(huge, ref, env, datasets,
                              WeightVector::one_hot(1, 0), {}, tc),
                  std::runtime_error);
}

TEST_CASE("train_modpo: zero epochs is a no-op, phase losses decrease, zero weights skipped") {
  Environment env = small_env(91, 4, 2, 10, 6);
  Rng rng(91);
  Policy sft = random_policy(rng, env.dim, 2);
  std::vector<PreferenceDataset> datasets{random_dataset(env, 0, 24, rng),
                                          random_dataset(env, 1, 24, rng)};
  TrainConfig tc;
  tc.seed = 7;
  std::vector<MarginRewardModel> margins = train_margin_models(env, sft, datasets, tc);

  TrainConfig none = tc;
  none.epochs = 0;
  WeightVector w = WeightVector::make({0.5, 0.5});
  Policy out = train_modpo(sft, sft, env, datasets, w, margins, none);
  CHECK(out.base == sft.base);
  CHECK(out.heads == sft.heads);

  TrainLog log;
  tc.epochs = 20;
  Policy trained = train_modpo(sft, sft, env, datasets, w, margins, tc, &log);
  CHECK(trained.finite());
  for (int phase = 0; phase < 2; ++phase) {
    double first = -1.0, last = -1.0;
    for (const auto& e : log.entries) {
      if (e.phase != phase) continue;
      if (e.epoch == 0) first = e.loss;
      last = e.loss;
    }
    REQUIRE(first >= 0.0);
    CHECK(last <= first);
  }

  TrainLog skip_log;
  WeightVector e0 = WeightVector::one_hot(2, 0);
  train_modpo(sft, sft, env, datasets, e0, margins, tc, &skip_log);
  REQUIRE(skip_log.warnings.size() == 1);
  CHECK(skip_log.warnings[0].find("skipping") != std::string::npos);

  // Reproducibility of the shuffled mini-batch schedule under a fixed seed.
  Policy replay = train_modpo(sft, sft, env, datasets, w, margins, tc);
  CHECK(replay.base == trained.base);
  CHECK(replay.heads == trained.heads);
}

TEST_CASE("weight_grid enumerates the simplex lattice") {
  auto grid = weight_grid(2, 0.2);
  REQUIRE(grid.size() == 6);
  std::vector<std::vector<double>> expect{{1.0, 0.0}, {0.8, 0.2}, {0.6, 0.4},
                                          {0.4, 0.6}, {0.2, 0.8}, {0.0, 1.0}};
  for (std::size_t i = 0; i < expect.size(); ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(grid[i][j] == doctest::Approx(expect[i][j]).epsilon(1e-12));

  auto single = weight_grid(1, 0.2);
  REQUIRE(single.size() == 1);
  CHECK(single[0][0] == 1.0);

  auto grid3 = weight_grid(3, 0.2);
  CHECK(grid3.size() == 21);  // compositions of 5 ticks into 3 parts
  int one_hots = 0;
  for (const auto& w : grid3) {
    double sum = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) sum += w[j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    if (w.is_one_hot()) ++one_hots;
  }
  CHECK(one_hots == 3);

  CHECK_THROWS_AS(weight_grid(2, 0.3), std::invalid_argument);
  CHECK_THROWS_AS(weight_grid(0, 0.2), std::invalid_argument);
}

TEST_CASE("sweep is independent of grid order and counts its grid") {
  Environment env = small_env(95, 4, 2, 8, 5);
  Rng rng(95);
  Policy sft = random_policy(rng, env.dim, 2);
  std::vector<PreferenceDataset> datasets{random_dataset(env, 0, 16, rng),
                                          random_dataset(env, 1, 16, rng)};
  TrainConfig tc;
  tc.epochs = 5;
  auto margins = train_margin_models(env, sft, datasets, tc);
  auto grid = weight_grid(2, 0.2);
  auto fwd = sweep(sft, sft, env, datasets, margins, grid, tc);
  REQUIRE(fwd.size() == 6);
  std::vector<WeightVector> rev_grid(grid.rbegin(), grid.rend());
  auto rev = sweep(sft, sft, env, datasets, margins, rev_grid, tc);
  for (std::size_t i = 0; i < fwd.size(); ++i) {
    const auto& back = rev[rev.size() - 1 - i];
    CHECK(fwd[i].first.values() == back.first.values());
    CHECK(fwd[i].second.base == back.second.base);
    CHECK(fwd[i].second.heads == back.second.heads);
  }
  CHECK_THROWS_AS(sweep(sft, sft, env, datasets, margins, {}, tc),
                  std::invalid_argument);
}
