#pragma once

#include <vector>

#include "moalign/core.hpp"
#include "moalign/env.hpp"
#include "moalign/rng.hpp"

namespace moalign {

/// Weight-conditioned softmax policy over each prompt's candidates.
/// Logits are w-mixtures of per-objective linear heads plus a shared base:
///   logit(x,y,w) = <u0 + sum_k w_k u_k, phi(x,y)>.
/// A one-hot w selects a dedicated head; the zero policy is uniform and
/// ignores w, which is how the iteration-1 reference behaves.
struct Policy {
  std::vector<double> base;                // u0
  std::vector<std::vector<double>> heads;  // u_k, one per objective

  Policy() = default;
  Policy(int d, int n_objectives);

  int dim() const { return static_cast<int>(base.size()); }
  int n_heads() const { return static_cast<int>(heads.size()); }

  double logit(const Environment& env, PromptId x, ResponseId y,
               const WeightVector& w) const;
  std::vector<double> log_probs(const Environment& env, PromptId x,
                                const WeightVector& w) const;
  double log_prob(const Environment& env, PromptId x, ResponseId y,
                  const WeightVector& w) const;
  ResponseId sample(const Environment& env, PromptId x, const WeightVector& w,
                    Rng& rng) const;

  bool finite() const;
};

/// Frozen copy of a policy's parameters, held for one alignment round.
using ReferencePolicy = Policy;

/// Explicit per-prompt distributions over the candidate set.
struct TabularPolicy {
  std::vector<std::vector<double>> probs;  // [prompt][response]
};

TabularPolicy tabulate(const Policy& policy, const Environment& env,
                       const WeightVector& w);
TabularPolicy uniform_tabular(const Environment& env);

/// Exact maximizer of the KL-regularized objective on finite response sets:
/// pi*(y|x) proportional to ref(y|x) * exp(w^T theta^T phi(x,y) / beta).
TabularPolicy gibbs_oracle(const Environment& env,
                           const std::vector<RewardParameters>& theta,
                           const WeightVector& w, double beta,
                           const TabularPolicy& ref);

double kl_divergence(const TabularPolicy& p, const TabularPolicy& ref, PromptId x);

/// Cross-entropy fit of the base head toward each prompt's reference
/// response; heads stay zero, so the result ignores w.
Policy fit_sft(const Environment& env, int steps = 200, double learning_rate = 0.1);

double log_sum_exp(const std::vector<double>& v);

}  // namespace moalign
