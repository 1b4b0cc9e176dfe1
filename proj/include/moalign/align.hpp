#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "moalign/core.hpp"
#include "moalign/env.hpp"
#include "moalign/policy.hpp"

namespace moalign {

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 60;
  int batch_size = 16;
  double beta = 0.5;
  std::uint64_t seed = 1;
  std::vector<int> dataset_order;  // empty = natural order 0..N-1

  void validate() const;
};

struct TrainLogEntry {
  int phase = 0;  // objective index of the dataset being traversed
  int epoch = 0;
  double loss = 0.0;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  std::vector<std::string> warnings;
};

/// Bradley-Terry win probability sigma(r_w - r_l).
double bt_probability(double r_w, double r_l);

/// Draws a (winner, loser) ordering of two candidates under the ground-truth
/// Bradley-Terry model for objective k.
std::pair<ResponseId, ResponseId> sample_preference_label(
    const Environment& env, int k, PromptId x, ResponseId y_a, ResponseId y_b,
    Rng& rng);

struct LossResult {
  double value = 0.0;
  Policy grad;  // same shape as the policy
};

/// DPO loss (mean over pairs of -log sigma(beta * [dlog pi - dlog ref])),
/// evaluated at the dataset's one-hot weight, with analytic gradient.
LossResult dpo_loss(const Policy& policy, const Policy& ref,
                    const Environment& env, const PreferenceDataset& dataset,
                    const WeightVector& w, double beta);

/// Implicit reward of a DPO-trained policy: R_k(x,y) = beta * log-ratio to
/// the reference at the objective's one-hot weight.
struct MarginRewardModel {
  int objective = 0;
  Policy trained;
  Policy ref;
  double beta = 0.5;

  double reward(const Environment& env, PromptId x, ResponseId y) const;
};

std::vector<MarginRewardModel> train_margin_models(
    const Environment& env, const Policy& ref,
    const std::vector<PreferenceDataset>& datasets, const TrainConfig& config,
    TrainLog* log = nullptr);

/// MODPO loss over dataset k at weight w, with the margin built from the
/// other objectives' reward models; reduces to the DPO loss at one-hot w.
LossResult modpo_loss(const Policy& policy, const Policy& sft_ref,
                      const Environment& env, const PreferenceDataset& dataset,
                      const WeightVector& w,
                      const std::vector<MarginRewardModel>& margins,
                      double beta);

/// Sequential traversal of the datasets with mini-batch gradient descent on
/// the MODPO loss; datasets whose weight component is zero are skipped.
Policy train_modpo(Policy policy, const Policy& sft_ref, const Environment& env,
                   const std::vector<PreferenceDataset>& datasets,
                   const WeightVector& w,
                   const std::vector<MarginRewardModel>& margins,
                   const TrainConfig& config, TrainLog* log = nullptr);

/// All weight vectors on the step lattice of the N-simplex, descending
/// lexicographic order; includes the one-hot vertices.
std::vector<WeightVector> weight_grid(int n, double step);

/// Independent MODPO run per grid point, each initialized from `init`.
std::vector<std::pair<WeightVector, Policy>> sweep(
    const Policy& init, const Policy& sft_ref, const Environment& env,
    const std::vector<PreferenceDataset>& datasets,
    const std::vector<MarginRewardModel>& margins,
    const std::vector<WeightVector>& grid, const TrainConfig& config,
    int jobs = 1);

}  // namespace moalign
