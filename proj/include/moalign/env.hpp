#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "moalign/core.hpp"
#include "moalign/rng.hpp"

namespace moalign {

/// Deterministic scoring function standing in for a radiology metric.
/// The reference response of the prompt is baked into the environment.
struct Scorer {
  std::string name;
  bool higher_better = true;
  std::function<double(PromptId, ResponseId)> score;
};

struct GenParams {
  int d = 16;
  int n_objectives = 3;
  int num_prompts = 400;
  int candidates_per_prompt = 64;
  double B = 1.0;
  int prompts_per_patient = 2;
  int group_count = 6;
  double rho_alpha = 0.0;  // 0 = uniform prompt distribution, >0 = power law
  // Scale of the per-(prompt, response) feature perturbation relative to the
  // shared per-response direction. Small values make response quality nearly
  // prompt-independent; large values decorrelate prompts.
  double prompt_noise = 0.3;
};

/// Synthetic environment: finite prompts, a shared candidate-response id
/// space, per-(prompt,response) features, ground-truth linear rewards per
/// objective, reference responses, patient and group labels.
///
/// Response ids are global: every id in [0, n_responses) is a candidate of
/// every prompt (a report can be scored against any prompt), with features
/// depending on the (prompt, response) pair.
struct Environment {
  int dim = 0;
  int n_objectives = 0;
  int n_prompts = 0;
  int n_responses = 0;
  double b = 1.0;
  std::vector<double> rho;                          // per prompt, sums to 1
  std::vector<std::vector<FeatureVector>> phi;      // [prompt][response]
  std::vector<RewardParameters> theta_star;         // per objective
  std::vector<ResponseId> reference;                // per prompt
  std::vector<int> patient;                         // per prompt
  std::vector<std::vector<int>> group;              // [prompt][response]

  static Environment generate(const GenParams& params, std::uint64_t seed);

  void check_prompt(PromptId x) const;
  void check_ids(PromptId x, ResponseId y) const;
  void validate() const;

  const FeatureVector& features(PromptId x, ResponseId y) const;
  ResponseId reference_response(PromptId x) const;

  /// <theta*_k, phi(x,y)>; bounded in [-B, B].
  double true_reward(int k, PromptId x, ResponseId y) const;

  /// Shifted cosine of the two feature vectors, in [0,1], symmetric,
  /// 1 on identical features.
  double similarity(PromptId xa, ResponseId ya, PromptId xb, ResponseId yb) const;
  double similarity_to_reference(PromptId x, ResponseId y) const;

  /// N scorers; scorer k evaluates objective k's true reward, except the
  /// first one which is emitted lower-better (negated score).
  std::vector<Scorer> builtin_scorers() const;
};

}  // namespace moalign
