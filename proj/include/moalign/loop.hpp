#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "moalign/align.hpp"
#include "moalign/core.hpp"
#include "moalign/env.hpp"
#include "moalign/pdc.hpp"
#include "moalign/policy.hpp"

namespace moalign {

struct IterationConfig {
  Hyperparameters hp;
  int samples_per_prompt = 1;
  double dedup_low = 0.5;
  double dedup_high = 0.8;
  int jobs = 1;
};

/// Evaluation row for one trained weight configuration.
struct WeightMetrics {
  WeightVector weight = WeightVector::uniform(1);
  std::vector<double> expected_reward;  // per objective, exact under the policy
  std::vector<double> scorer_mean;      // per scorer, exact expectation
  double subopt = 0.0;                  // against the round's reference policy
};

struct IterationRecord {
  int iteration = 1;
  std::vector<PreferenceDataset> datasets;
  std::vector<SamplingPlan> plans;
  std::vector<std::pair<WeightVector, Policy>> policies;  // grid + uniform
  std::vector<WeightMetrics> metrics;  // aligned with `policies`
  std::vector<std::array<double, 5>> chosen_quantiles;  // per objective
  std::vector<double> reference_scorer_mean;  // per scorer, reference responses
  Policy next_reference;
  std::vector<std::string> warnings;
};

struct LoopState {
  Policy reference;  // generation / margin-reward reference, updated per round
  Policy sft;        // fixed KL anchor for the preference loss and metrics
  int next_iteration = 1;
};

/// One full alignment round: dataset construction from the current reference,
/// margin-model training, a weight-grid sweep, metric evaluation, and
/// promotion of the uniform-weight policy to next reference.
IterationRecord run_iteration(LoopState& state, const Environment& env,
                              const std::vector<Scorer>& scorers,
                              const IterationConfig& config);

/// Exact metric row for one policy at one weight; `ref` anchors the
/// sub-optimality gap.
WeightMetrics evaluate_policy(const Environment& env, const Policy& policy,
                              const WeightVector& w,
                              const std::vector<Scorer>& scorers, double beta,
                              const Policy& ref);

/// The one-hot weights followed by the uniform weight.
std::vector<WeightVector> standard_configs(int n);

/// Rows for the given weight configurations, looked up among trained
/// (weight, policy) results; unknown configurations are an error.
std::vector<WeightMetrics> evaluate_weight_configs(
    const Environment& env,
    const std::vector<std::pair<WeightVector, Policy>>& trained,
    const std::vector<WeightVector>& configs, const std::vector<Scorer>& scorers,
    double beta, const Policy& ref);

struct ParetoPoint {
  std::vector<double> weight;
  std::vector<double> values;  // per scorer, normalized higher-better
};

/// Builds front points from metric rows; lower-better scorer means are
/// negated so that larger is always better.
std::vector<ParetoPoint> make_pareto_points(
    const std::vector<WeightMetrics>& metrics,
    const std::vector<Scorer>& scorers);

/// Maximal non-dominated subset under the two axes (strict dominance:
/// no worse on both, better on at least one); duplicates of a front point
/// all stay. Output sorted by the first axis, then the second.
std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points,
                                      std::pair<int, int> axes);

struct FrontProgress {
  int from = 0;  // iteration index of the earlier front
  int to = 0;
  double fraction = 0.0;  // earlier front points weakly dominated by later cloud
};

/// Per-adjacent-iteration fraction of front points weakly dominated by the
/// next iteration's points, for one axis pair.
std::vector<FrontProgress> front_progression(
    const std::vector<std::vector<ParetoPoint>>& clouds,
    std::pair<int, int> axes);

}  // namespace moalign
