#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "moalign/core.hpp"
#include "moalign/env.hpp"
#include "moalign/policy.hpp"

namespace moalign {

struct PoolEntry {
  PromptId prompt = 0;
  ResponseId response = 0;
  double sim_to_ref = 0.0;
};

/// Deduplicated, group-partitioned candidate set.
struct CandidatePool {
  std::vector<PoolEntry> entries;           // sorted by (group, prompt, response)
  std::map<int, std::vector<std::size_t>> groups;  // group label -> entry indices
};

struct PlanRound {
  int q = 0;       // groups with remaining capacity
  long mu = 0;     // ceil(K_r / Q)
  long k1 = 0;     // granted to capacity-bound groups
  long k2 = 0;     // granted at mu
};

struct SamplingPlan {
  std::map<int, long> quota;  // group label -> K_c
  long requested = 0;         // K
  long total = 0;             // sum of quotas = min(K, capacity)
  long capacity = 0;          // sum over groups of max(N_c - 1, 0)
  bool shortfall = false;
  std::vector<PlanRound> rounds;
};

/// Draws one (or more) responses per prompt from the policy conditioned on
/// the one-hot weight for objective k; annotates similarity to reference.
std::vector<PoolEntry> self_generate(const Policy& policy, const Environment& env,
                                     int k, int samples_per_prompt, Rng& rng);

/// Keeps the entry with the highest similarity-to-reference per patient;
/// ties broken by lower prompt id, then lower response id.
std::vector<PoolEntry> dedup_patient(std::vector<PoolEntry> entries,
                                     const Environment& env);

/// Discards entries with similarity-to-reference below `low`; within groups
/// of more than 2 entries, removes near-duplicate pairs (mutual similarity
/// above `high`), keeping the entry closer to the reference.
CandidatePool dedup_group(std::vector<PoolEntry> entries, const Environment& env,
                          double low = 0.5, double high = 0.8);

/// Iterative per-group quota allocation; quotas are capped at N_c - 1 so a
/// chosen report always has a remainder to reject from.
SamplingPlan plan_stratified(const CandidatePool& pool, long K);

PreferenceDataset build_preference_dataset(const CandidatePool& pool,
                                           const Environment& env,
                                           const Scorer& scorer, int objective,
                                           const SamplingPlan& plan, Rng& rng);

struct BuildResult {
  std::vector<PreferenceDataset> datasets;
  std::vector<SamplingPlan> plans;
  std::vector<CandidatePool> pools;
};

/// Full PDC pass: one self-generation + dedup + stratified sampling pipeline
/// per objective, each on its own derived rng stream.
BuildResult build_all(const Policy& policy, const Environment& env,
                      const std::vector<Scorer>& scorers, long K,
                      std::uint64_t seed, int samples_per_prompt = 1,
                      double low = 0.5, double high = 0.8);

}  // namespace moalign
