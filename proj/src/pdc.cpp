#include "moalign/pdc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace moalign {

std::vector<PoolEntry> self_generate(const Policy& policy, const Environment& env,
                                     int k, int samples_per_prompt, Rng& rng) {
  if (k < 0 || k >= env.n_objectives)
    throw std::out_of_range("self_generate: objective index out of range");
  if (samples_per_prompt < 1)
    throw std::invalid_argument("self_generate: samples_per_prompt must be >= 1");
  WeightVector w = WeightVector::one_hot(env.n_objectives, k);
  std::vector<PoolEntry> out;
  out.reserve(static_cast<std::size_t>(env.n_prompts) * samples_per_prompt);
  for (int x = 0; x < env.n_prompts; ++x) {
    for (int s = 0; s < samples_per_prompt; ++s) {
      ResponseId y = policy.sample(env, x, w, rng);
      out.push_back({x, y, env.similarity_to_reference(x, y)});
    }
  }
  return out;
}

std::vector<PoolEntry> dedup_patient(std::vector<PoolEntry> entries,
                                     const Environment& env) {
  std::map<int, PoolEntry> best;
  for (const auto& e : entries) {
    int pid = env.patient.at(e.prompt);
    auto it = best.find(pid);
    if (it == best.end()) {
      best.emplace(pid, e);
      continue;
    }
    const PoolEntry& cur = it->second;
    bool take = e.sim_to_ref > cur.sim_to_ref ||
                (e.sim_to_ref == cur.sim_to_ref &&
                 (e.prompt < cur.prompt ||
                  (e.prompt == cur.prompt && e.response < cur.response)));
    if (take) it->second = e;
  }
  std::vector<PoolEntry> out;
  out.reserve(best.size());
  for (const auto& [pid, e] : best) out.push_back(e);
  std::sort(out.begin(), out.end(), [](const PoolEntry& a, const PoolEntry& b) {
    return a.prompt != b.prompt ? a.prompt < b.prompt : a.response < b.response;
  });
  return out;
}

CandidatePool dedup_group(std::vector<PoolEntry> entries, const Environment& env,
                          double low, double high) {
  if (!(low > 0.0 && high < 1.0 && low < high))
    throw std::invalid_argument("dedup_group: thresholds must satisfy 0 < low < high < 1");

  // Discard rule applies to every entry regardless of group size.
  std::vector<PoolEntry> kept;
  for (const auto& e : entries)
    if (e.sim_to_ref >= low) kept.push_back(e);

  std::map<int, std::vector<PoolEntry>> by_group;
  for (const auto& e : kept)
    by_group[env.group.at(e.prompt).at(e.response)].push_back(e);

  CandidatePool pool;
  for (auto& [label, members] : by_group) {
    if (members.size() > 2) {
      // Pairwise dedup: greedy scan in quality order so the survivor of any
      // near-duplicate pair is the entry closer to the reference.
      std::sort(members.begin(), members.end(),
                [](const PoolEntry& a, const PoolEntry& b) {
                  if (a.sim_to_ref != b.sim_to_ref) return a.sim_to_ref > b.sim_to_ref;
                  if (a.response != b.response) return a.response < b.response;
                  return a.prompt < b.prompt;
                });
      std::vector<PoolEntry> survivors;
      for (const auto& e : members) {
        bool dup = false;
        for (const auto& s : survivors) {
          if (env.similarity(s.prompt, s.response, e.prompt, e.response) > high) {
            dup = true;
            break;
          }
        }
        if (!dup) survivors.push_back(e);
      }
      members = std::move(survivors);
    }
    std::sort(members.begin(), members.end(),
              [](const PoolEntry& a, const PoolEntry& b) {
                return a.prompt != b.prompt ? a.prompt < b.prompt
                                            : a.response < b.response;
              });
    for (const auto& e : members) {
      pool.groups[label].push_back(pool.entries.size());
      pool.entries.push_back(e);
    }
  }
  return pool;
}

SamplingPlan plan_stratified(const CandidatePool& pool, long K) {
  if (K < 0) throw std::invalid_argument("plan_stratified: K must be non-negative");
  SamplingPlan plan;
  plan.requested = K;
  std::map<int, long> cap;
  for (const auto& [label, idx] : pool.groups) {
    long c = std::max<long>(static_cast<long>(idx.size()) - 1, 0);
    cap[label] = c;
    plan.capacity += c;
    plan.quota[label] = 0;
  }
  long target = std::min(K, plan.capacity);
  plan.shortfall = target < K;

  long allocated = 0;
  while (allocated < target) {
    long k_r = target - allocated;
    int q = 0;
    for (const auto& [label, c] : cap)
      if (c - plan.quota[label] >= 1) ++q;
    if (q == 0) break;  // cannot happen while allocated < target
    long mu = (k_r + q - 1) / q;
    PlanRound round{q, mu, 0, 0};
    for (auto& [label, quota] : plan.quota) {
      long remaining = cap[label] - quota;
      if (remaining < 1) continue;
      long grant = std::min(remaining, mu);
      grant = std::min(grant, target - allocated);
      if (grant <= 0) continue;
      quota += grant;
      allocated += grant;
      if (remaining < mu)
        round.k1 += grant;
      else
        round.k2 += grant;
    }
    plan.rounds.push_back(round);
  }
  plan.total = allocated;
  return plan;
}

PreferenceDataset build_preference_dataset(const CandidatePool& pool,
                                           const Environment& env,
                                           const Scorer& scorer, int objective,
                                           const SamplingPlan& plan, Rng& rng) {
  std::vector<PreferencePair> pairs;
  for (const auto& [label, indices] : pool.groups) {
    long quota = plan.quota.count(label) ? plan.quota.at(label) : 0;
    if (quota == 0) continue;
    if (quota >= static_cast<long>(indices.size()))
      throw std::runtime_error("build_preference_dataset: group " +
                               std::to_string(label) +
                               " has no remainder for rejected sampling");

    struct Scored {
      PoolEntry entry;
      double score;
    };
    std::vector<Scored> members;
    members.reserve(indices.size());
    for (std::size_t i : indices) {
      const PoolEntry& e = pool.entries[i];
      env.check_ids(e.prompt, e.response);
      members.push_back({e, scorer.score(e.prompt, e.response)});
    }
    // Rank best-first under the scorer's direction; ties by lower response
    // id, then lower prompt id.
    std::sort(members.begin(), members.end(),
              [&scorer](const Scored& a, const Scored& b) {
                if (a.score != b.score)
                  return scorer.higher_better ? a.score > b.score : a.score < b.score;
                if (a.entry.response != b.entry.response)
                  return a.entry.response < b.entry.response;
                return a.entry.prompt < b.entry.prompt;
              });
    const std::size_t remainder = members.size() - static_cast<std::size_t>(quota);
    std::uniform_int_distribution<std::size_t> pick(0, remainder - 1);
    for (long c = 0; c < quota; ++c) {
      const Scored& chosen = members[c];
      // Responses share one global id space, so a drawn rejected entry can
      // carry the chosen response id under another prompt; advance to the
      // next distinct id in that case.
      std::size_t slot = pick(rng);
      std::size_t tried = 0;
      while (members[static_cast<std::size_t>(quota) + slot].entry.response ==
                 chosen.entry.response &&
             tried < remainder) {
        slot = (slot + 1) % remainder;
        ++tried;
      }
      std::size_t reject_index = static_cast<std::size_t>(quota) + slot;
      if (tried == remainder) {
        // Fall back to any lower-ranked entry with a distinct response id;
        // ranking guarantees its score is no better than the chosen one.
        reject_index = members.size();
        for (std::size_t j = static_cast<std::size_t>(c) + 1; j < members.size();
             ++j) {
          if (members[j].entry.response != chosen.entry.response) {
            reject_index = j;
            break;
          }
        }
        if (reject_index == members.size()) continue;  // nothing distinct to reject
      }
      const Scored& rejected = members[reject_index];
      pairs.emplace_back(chosen.entry.prompt, chosen.entry.response,
                         rejected.entry.response, objective, chosen.score,
                         rejected.score);
      bool ordered = scorer.higher_better ? chosen.score >= rejected.score
                                          : chosen.score <= rejected.score;
      if (!ordered)
        throw std::runtime_error("build_preference_dataset: score ordering violated");
    }
  }
  return PreferenceDataset(objective, std::move(pairs));
}

BuildResult build_all(const Policy& policy, const Environment& env,
                      const std::vector<Scorer>& scorers, long K,
                      std::uint64_t seed, int samples_per_prompt,
                      double low, double high) {
  if (static_cast<int>(scorers.size()) != env.n_objectives)
    throw std::invalid_argument("build_all: need one scorer per objective");
  BuildResult result;
  for (int k = 0; k < env.n_objectives; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    auto raw = self_generate(policy, env, k, samples_per_prompt, rng);
    auto pooled = dedup_group(dedup_patient(std::move(raw), env), env, low, high);
    auto plan = plan_stratified(pooled, K);
    result.datasets.push_back(
        build_preference_dataset(pooled, env, scorers[k], k, plan, rng));
    result.plans.push_back(std::move(plan));
    result.pools.push_back(std::move(pooled));
  }
  return result;
}

}  // namespace moalign
