#include "moalign/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace moalign {

double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Policy::Policy(int d, int n_objectives)
    : base(d, 0.0), heads(n_objectives, std::vector<double>(d, 0.0)) {}

double Policy::logit(const Environment& env, PromptId x, ResponseId y,
                     const WeightVector& w) const {
  if (static_cast<int>(w.size()) != n_heads())
    throw std::invalid_argument("Policy::logit: weight length != number of heads");
  const auto& f = env.features(x, y).values;
  if (static_cast<int>(f.size()) != dim())
    throw std::invalid_argument("Policy::logit: feature dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double u = base[i];
    for (std::size_t k = 0; k < w.size(); ++k) u += w[k] * heads[k][i];
    s += u * f[i];
  }
  return s;
}

std::vector<double> Policy::log_probs(const Environment& env, PromptId x,
                                      const WeightVector& w) const {
  env.check_prompt(x);
  std::vector<double> logits(env.n_responses);
  for (int y = 0; y < env.n_responses; ++y) logits[y] = logit(env, x, y, w);
  double lse = log_sum_exp(logits);
  for (double& l : logits) l -= lse;
  return logits;
}

double Policy::log_prob(const Environment& env, PromptId x, ResponseId y,
                        const WeightVector& w) const {
  env.check_ids(x, y);
  return log_probs(env, x, w)[y];
}

ResponseId Policy::sample(const Environment& env, PromptId x,
                          const WeightVector& w, Rng& rng) const {
  auto lp = log_probs(env, x, w);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double u = unit(rng);
  double acc = 0.0;
  for (int y = 0; y < env.n_responses; ++y) {
    acc += std::exp(lp[y]);
    if (u < acc) return y;
  }
  return env.n_responses - 1;
}

bool Policy::finite() const {
  for (double v : base)
    if (!std::isfinite(v)) return false;
  for (const auto& h : heads)
    for (double v : h)
      if (!std::isfinite(v)) return false;
  return true;
}

TabularPolicy tabulate(const Policy& policy, const Environment& env,
                       const WeightVector& w) {
  TabularPolicy t;
  t.probs.resize(env.n_prompts);
  for (int x = 0; x < env.n_prompts; ++x) {
    auto lp = policy.log_probs(env, x, w);
    t.probs[x].resize(lp.size());
    for (std::size_t y = 0; y < lp.size(); ++y) t.probs[x][y] = std::exp(lp[y]);
  }
  return t;
}

TabularPolicy uniform_tabular(const Environment& env) {
  TabularPolicy t;
  t.probs.assign(env.n_prompts,
                 std::vector<double>(env.n_responses, 1.0 / env.n_responses));
  return t;
}

TabularPolicy gibbs_oracle(const Environment& env,
                           const std::vector<RewardParameters>& theta,
                           const WeightVector& w, double beta,
                           const TabularPolicy& ref) {
  if (!(beta > 0.0)) throw std::invalid_argument("gibbs_oracle: beta must be positive");
  if (theta.size() != w.size())
    throw std::invalid_argument("gibbs_oracle: weight/theta count mismatch");
  TabularPolicy out;
  out.probs.resize(env.n_prompts);
  std::vector<double> logw(env.n_responses);
  for (int x = 0; x < env.n_prompts; ++x) {
    for (int y = 0; y < env.n_responses; ++y) {
      double r = 0.0;
      for (std::size_t k = 0; k < theta.size(); ++k)
        r += w[k] * dot(theta[k].theta, env.phi[x][y].values);
      logw[y] = std::log(ref.probs[x][y]) + r / beta;
    }
    double lse = log_sum_exp(logw);
    out.probs[x].resize(env.n_responses);
    for (int y = 0; y < env.n_responses; ++y)
      out.probs[x][y] = std::exp(logw[y] - lse);
  }
  return out;
}

double kl_divergence(const TabularPolicy& p, const TabularPolicy& ref, PromptId x) {
  const auto& pp = p.probs.at(x);
  const auto& rp = ref.probs.at(x);
  if (pp.size() != rp.size())
    throw std::invalid_argument("kl_divergence: support mismatch");
  double kl = 0.0;
  for (std::size_t y = 0; y < pp.size(); ++y) {
    if (pp[y] <= 0.0) continue;
    if (rp[y] <= 0.0)
      throw std::invalid_argument("kl_divergence: ref assigns 0 where p > 0");
    kl += pp[y] * std::log(pp[y] / rp[y]);
  }
  return std::max(kl, 0.0);
}

Policy fit_sft(const Environment& env, int steps, double learning_rate) {
  Policy p(env.dim, env.n_objectives);
  WeightVector w = WeightVector::uniform(env.n_objectives);
  const double m = static_cast<double>(env.n_prompts);
  for (int it = 0; it < steps; ++it) {
    std::vector<double> grad(env.dim, 0.0);
    for (int x = 0; x < env.n_prompts; ++x) {
      auto lp = p.log_probs(env, x, w);
      const auto& fr = env.phi[x][env.reference[x]].values;
      for (int i = 0; i < env.dim; ++i) grad[i] += fr[i];
      for (int y = 0; y < env.n_responses; ++y) {
        double prob = std::exp(lp[y]);
        const auto& f = env.phi[x][y].values;
        for (int i = 0; i < env.dim; ++i) grad[i] -= prob * f[i];
      }
    }
    for (int i = 0; i < env.dim; ++i) p.base[i] += learning_rate * grad[i] / m;
  }
  return p;
}

}  // namespace moalign
