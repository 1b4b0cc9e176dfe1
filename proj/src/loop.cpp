#include "moalign/loop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "moalign/rng.hpp"
#include "moalign/theory.hpp"
#include "moalign/util.hpp"

namespace moalign {

namespace {

bool same_weight(const WeightVector& a, const WeightVector& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (std::abs(a[k] - b[k]) > 1e-12) return false;
  return true;
}

}  // namespace

WeightMetrics evaluate_policy(const Environment& env, const Policy& policy,
                              const WeightVector& w,
                              const std::vector<Scorer>& scorers, double beta,
                              const Policy& ref) {
  if (static_cast<int>(w.size()) != env.n_objectives)
    throw std::invalid_argument("evaluate_policy: weight size mismatch");
  WeightMetrics row;
  row.weight = w;
  row.expected_reward.assign(env.n_objectives, 0.0);
  row.scorer_mean.assign(scorers.size(), 0.0);
  TabularPolicy pi = tabulate(policy, env, w);
  for (int x = 0; x < env.n_prompts; ++x) {
    for (int y = 0; y < env.n_responses; ++y) {
      double mass = env.rho[x] * pi.probs[x][y];
      if (mass <= 0.0) continue;
      for (int k = 0; k < env.n_objectives; ++k)
        row.expected_reward[k] += mass * env.true_reward(k, x, y);
      for (std::size_t s = 0; s < scorers.size(); ++s)
        row.scorer_mean[s] += mass * scorers[s].score(x, y);
    }
  }
  row.subopt = suboptimality(env, pi, w, beta, tabulate(ref, env, w));
  return row;
}

std::vector<WeightVector> standard_configs(int n) {
  std::vector<WeightVector> configs;
  for (int k = 0; k < n; ++k)
    configs.push_back(WeightVector::one_hot(static_cast<std::size_t>(n), k));
  configs.push_back(WeightVector::uniform(static_cast<std::size_t>(n)));
  return configs;
}

std::vector<WeightMetrics> evaluate_weight_configs(
    const Environment& env,
    const std::vector<std::pair<WeightVector, Policy>>& trained,
    const std::vector<WeightVector>& configs, const std::vector<Scorer>& scorers,
    double beta, const Policy& ref) {
  std::vector<WeightMetrics> rows;
  rows.reserve(configs.size());
  for (const auto& w : configs) {
    auto it = std::find_if(trained.begin(), trained.end(),
                           [&](const auto& p) { return same_weight(p.first, w); });
    if (it == trained.end())
      throw std::invalid_argument(
          "evaluate_weight_configs: no trained policy for requested weight");
    rows.push_back(evaluate_policy(env, it->second, w, scorers, beta, ref));
  }
  return rows;
}

IterationRecord run_iteration(LoopState& state, const Environment& env,
                              const std::vector<Scorer>& scorers,
                              const IterationConfig& config) {
  config.hp.validate();
  if (static_cast<int>(scorers.size()) != env.n_objectives)
    throw std::invalid_argument("run_iteration: one scorer per objective required");
  // Common random numbers: every iteration reuses the same derived streams,
  // so consecutive rounds differ only through the updated reference policy
  // rather than through dataset resampling noise.
  const std::uint64_t iter_seed = derive_seed(config.hp.seed, 0x10051);

  IterationRecord record;
  record.iteration = state.next_iteration;

  BuildResult built = build_all(state.reference, env, scorers,
                                config.hp.pairs_per_objective,
                                derive_seed(iter_seed, 1),
                                config.samples_per_prompt, config.dedup_low,
                                config.dedup_high);
  record.datasets = std::move(built.datasets);
  record.plans = std::move(built.plans);
  for (std::size_t k = 0; k < record.plans.size(); ++k)
    if (record.plans[k].shortfall)
      record.warnings.push_back("dataset " + std::to_string(k) +
                                " short by capacity: " +
                                std::to_string(record.plans[k].requested -
                                               record.plans[k].total) +
                                " pairs");

  TrainConfig tc;
  tc.learning_rate = config.hp.learning_rate;
  tc.epochs = config.hp.epochs;
  tc.batch_size = config.hp.batch_size;
  tc.beta = config.hp.beta;
  tc.seed = derive_seed(iter_seed, 2);
  TrainLog log;
  auto margins =
      train_margin_models(env, state.reference, record.datasets, tc, &log);

  std::vector<WeightVector> grid =
      weight_grid(env.n_objectives, config.hp.weight_grid_step);
  WeightVector uniform = WeightVector::uniform(env.n_objectives);
  bool has_uniform = std::any_of(grid.begin(), grid.end(), [&](const auto& w) {
    return same_weight(w, uniform);
  });
  if (!has_uniform) grid.push_back(uniform);

  TrainConfig sweep_tc = tc;
  sweep_tc.seed = derive_seed(iter_seed, 3);
  auto trained = sweep(state.reference, state.sft, env, record.datasets,
                       margins, grid, sweep_tc, config.jobs);
  record.policies = std::move(trained);
  for (const auto& warning : log.warnings) record.warnings.push_back(warning);

  record.metrics.resize(record.policies.size());
  parallel_for(record.policies.size(), config.jobs, [&](std::size_t i) {
    record.metrics[i] =
        evaluate_policy(env, record.policies[i].second, record.policies[i].first,
                        scorers, config.hp.beta, state.sft);
  });

  record.chosen_quantiles.reserve(record.datasets.size());
  for (const auto& dataset : record.datasets) {
    if (dataset.size() == 0) {
      // Keep the per-objective alignment even when a dataset came up empty.
      record.chosen_quantiles.push_back(
          {std::numeric_limits<double>::quiet_NaN(),
           std::numeric_limits<double>::quiet_NaN(),
           std::numeric_limits<double>::quiet_NaN(),
           std::numeric_limits<double>::quiet_NaN(),
           std::numeric_limits<double>::quiet_NaN()});
      continue;
    }
    std::vector<double> scores;
    scores.reserve(dataset.size());
    for (const auto& pair : dataset.pairs) scores.push_back(pair.score_chosen);
    record.chosen_quantiles.push_back(quantile_summary(std::move(scores)));
  }
  record.reference_scorer_mean.assign(scorers.size(), 0.0);
  for (int x = 0; x < env.n_prompts; ++x)
    for (std::size_t s = 0; s < scorers.size(); ++s)
      record.reference_scorer_mean[s] +=
          env.rho[x] * scorers[s].score(x, env.reference_response(x));

  auto next = std::find_if(record.policies.begin(), record.policies.end(),
                           [&](const auto& p) { return same_weight(p.first, uniform); });
  record.next_reference = next->second;

  state.reference = record.next_reference;
  ++state.next_iteration;
  return record;
}

std::vector<ParetoPoint> make_pareto_points(
    const std::vector<WeightMetrics>& metrics,
    const std::vector<Scorer>& scorers) {
  std::vector<ParetoPoint> points;
  points.reserve(metrics.size());
  for (const auto& row : metrics) {
    if (row.scorer_mean.size() != scorers.size())
      throw std::invalid_argument("make_pareto_points: scorer count mismatch");
    ParetoPoint p;
    p.weight = row.weight.values();
    p.values.reserve(scorers.size());
    for (std::size_t s = 0; s < scorers.size(); ++s)
      p.values.push_back(scorers[s].higher_better ? row.scorer_mean[s]
                                                  : -row.scorer_mean[s]);
    points.push_back(std::move(p));
  }
  return points;
}

std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points,
                                      std::pair<int, int> axes) {
  if (points.empty())
    throw std::invalid_argument("pareto_front: no points");
  auto a = [&](const ParetoPoint& p) { return p.values.at(axes.first); };
  auto b = [&](const ParetoPoint& p) { return p.values.at(axes.second); };

  std::vector<std::size_t> order(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (a(points[i]) != a(points[j])) return a(points[i]) > a(points[j]);
    return b(points[i]) > b(points[j]);
  });

  std::vector<ParetoPoint> front;
  double best_b_strict = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;  // [i, j): block sharing the same first-axis value
    while (j < order.size() && a(points[order[j]]) == a(points[order[i]])) ++j;
    double block_max_b = b(points[order[i]]);  // block sorted by b descending
    for (std::size_t k = i; k < j; ++k) {
      const ParetoPoint& p = points[order[k]];
      if (b(p) == block_max_b && b(p) > best_b_strict) front.push_back(p);
    }
    best_b_strict = std::max(best_b_strict, block_max_b);
    i = j;
  }
  std::sort(front.begin(), front.end(),
            [&](const ParetoPoint& x, const ParetoPoint& y) {
              if (a(x) != a(y)) return a(x) < a(y);
              return b(x) < b(y);
            });
  return front;
}

std::vector<FrontProgress> front_progression(
    const std::vector<std::vector<ParetoPoint>>& clouds,
    std::pair<int, int> axes) {
  if (clouds.size() < 2)
    throw std::invalid_argument("front_progression: need at least two iterations");
  auto a = [&](const ParetoPoint& p) { return p.values.at(axes.first); };
  auto b = [&](const ParetoPoint& p) { return p.values.at(axes.second); };
  std::vector<FrontProgress> out;
  for (std::size_t i = 0; i + 1 < clouds.size(); ++i) {
    std::vector<ParetoPoint> front = pareto_front(clouds[i], axes);
    int covered = 0;
    for (const auto& p : front) {
      bool dominated = std::any_of(
          clouds[i + 1].begin(), clouds[i + 1].end(),
          [&](const ParetoPoint& q) { return a(q) >= a(p) && b(q) >= b(p); });
      covered += dominated ? 1 : 0;
    }
    FrontProgress fp;
    fp.from = static_cast<int>(i) + 1;
    fp.to = static_cast<int>(i) + 2;
    fp.fraction = static_cast<double>(covered) / static_cast<double>(front.size());
    out.push_back(fp);
  }
  return out;
}

}  // namespace moalign
