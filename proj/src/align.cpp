#include "moalign/align.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>

#include "moalign/util.hpp"

namespace moalign {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigma(x)), stable for large |x|.
double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

// Effective linear parameters at weight w: u0 + sum_k w_k u_k.
std::vector<double> mixture(const Policy& p, const WeightVector& w) {
  if (static_cast<int>(w.size()) != p.n_heads())
    throw std::invalid_argument("mixture: weight length != number of heads");
  std::vector<double> u = p.base;
  for (std::size_t k = 0; k < w.size(); ++k)
    for (int i = 0; i < p.dim(); ++i) u[i] += w[k] * p.heads[k][i];
  return u;
}

std::vector<double> feature_diff(const Environment& env, const PreferencePair& pr) {
  const auto& fw = env.features(pr.prompt, pr.chosen).values;
  const auto& fl = env.features(pr.prompt, pr.rejected).values;
  std::vector<double> d(fw.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = fw[i] - fl[i];
  return d;
}

double margin_pair_diff(const std::vector<MarginRewardModel>& margins,
                        const Environment& env, const PreferencePair& pr,
                        const WeightVector& w, std::size_t k) {
  double m = 0.0;
  std::vector<bool> covered(w.size(), false);
  for (const auto& model : margins) {
    std::size_t j = static_cast<std::size_t>(model.objective);
    if (j == k || j >= w.size()) continue;
    covered[j] = true;
    if (w[j] == 0.0) continue;
    m += w[j] * (model.reward(env, pr.prompt, pr.chosen) -
                 model.reward(env, pr.prompt, pr.rejected));
  }
  for (std::size_t j = 0; j < w.size(); ++j)
    if (j != k && w[j] > 0.0 && !covered[j])
      throw std::invalid_argument("modpo_loss: missing margin model for objective " +
                                  std::to_string(j));
  return m;
}

// Core preference loss over a batch: value and gradient of the mean of
// -log sigma(scale * <u_theta(w) - u_ref(w), dphi> - margin_i), where
// margins is empty for the DPO case.
LossResult preference_loss(const Policy& policy, const Policy& ref,
                           const Environment& env,
                           const std::vector<const PreferencePair*>& batch,
                           const WeightVector& w, double scale,
                           const std::vector<double>& margins) {
  LossResult out;
  out.grad = Policy(policy.dim(), policy.n_heads());
  if (batch.empty()) throw std::invalid_argument("preference loss: empty dataset");
  std::vector<double> u_theta = mixture(policy, w);
  std::vector<double> u_ref = mixture(ref, w);
  std::vector<double> u_delta(u_theta.size());
  for (std::size_t i = 0; i < u_delta.size(); ++i) u_delta[i] = u_theta[i] - u_ref[i];

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const PreferencePair& pr = *batch[b];
    std::vector<double> dphi = feature_diff(env, pr);
    double z = scale * dot(u_delta, dphi);
    if (!margins.empty()) z -= margins[b];
    out.value += -log_sigmoid(z) * inv_n;
    double coef = -sigmoid(-z) * scale * inv_n;
    for (std::size_t i = 0; i < dphi.size(); ++i) {
      out.grad.base[i] += coef * dphi[i];
      for (std::size_t k = 0; k < w.size(); ++k)
        out.grad.heads[k][i] += coef * w[k] * dphi[i];
    }
  }
  return out;
}

std::vector<const PreferencePair*> whole_dataset(const PreferenceDataset& d) {
  std::vector<const PreferencePair*> ptrs;
  ptrs.reserve(d.pairs.size());
  for (const auto& p : d.pairs) ptrs.push_back(&p);
  return ptrs;
}

void apply_step(Policy& policy, const Policy& grad, double lr) {
  for (int i = 0; i < policy.dim(); ++i) policy.base[i] -= lr * grad.base[i];
  for (int k = 0; k < policy.n_heads(); ++k)
    for (int i = 0; i < policy.dim(); ++i)
      policy.heads[k][i] -= lr * grad.heads[k][i];
}

// One sequential pass of mini-batch gradient descent over a dataset at a
// fixed weight, with per-pair fixed margins.
void run_phase(Policy& policy, const Policy& ref, const Environment& env,
               const PreferenceDataset& dataset, const WeightVector& w,
               double scale, const std::vector<double>& margins, int phase,
               const TrainConfig& config, Rng& rng, TrainLog* log) {
  auto full = whole_dataset(dataset);
  auto full_loss = [&]() {
    return preference_loss(policy, ref, env, full, w, scale, margins).value;
  };
  if (log) log->entries.push_back({phase, 0, full_loss()});
  std::vector<std::size_t> order(dataset.pairs.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      std::size_t end = std::min(order.size(),
                                 start + static_cast<std::size_t>(config.batch_size));
      std::vector<const PreferencePair*> batch;
      std::vector<double> batch_margins;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&dataset.pairs[order[i]]);
        if (!margins.empty()) batch_margins.push_back(margins[order[i]]);
      }
      LossResult r = preference_loss(policy, ref, env, batch, w, scale, batch_margins);
      if (!std::isfinite(r.value))
        throw std::runtime_error(
            "training diverged: non-finite loss at phase " + std::to_string(phase) +
            ", epoch " + std::to_string(epoch) + " (learning rate too large?)");
      apply_step(policy, r.grad, config.learning_rate);
    }
    if (log) log->entries.push_back({phase, epoch, full_loss()});
  }
  if (!policy.finite())
    throw std::runtime_error("training diverged: non-finite parameters");
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate <= 0");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: negative epochs");
  if (batch_size <= 0) throw std::invalid_argument("TrainConfig: batch_size <= 0");
  if (!(beta > 0.0)) throw std::invalid_argument("TrainConfig: beta <= 0");
}

double bt_probability(double r_w, double r_l) {
  if (!std::isfinite(r_w) || !std::isfinite(r_l))
    throw std::invalid_argument("bt_probability: non-finite reward");
  return sigmoid(r_w - r_l);
}

std::pair<ResponseId, ResponseId> sample_preference_label(
    const Environment& env, int k, PromptId x, ResponseId y_a, ResponseId y_b,
    Rng& rng) {
  if (y_a == y_b)
    throw std::invalid_argument("sample_preference_label: candidates must differ");
  double p_a = bt_probability(env.true_reward(k, x, y_a), env.true_reward(k, x, y_b));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return unit(rng) < p_a ? std::make_pair(y_a, y_b) : std::make_pair(y_b, y_a);
}

LossResult dpo_loss(const Policy& policy, const Policy& ref,
                    const Environment& env, const PreferenceDataset& dataset,
                    const WeightVector& w, double beta) {
  if (dataset.pairs.empty()) throw std::invalid_argument("dpo_loss: empty dataset");
  if (!(beta > 0.0)) throw std::invalid_argument("dpo_loss: beta <= 0");
  return preference_loss(policy, ref, env, whole_dataset(dataset), w, beta, {});
}

double MarginRewardModel::reward(const Environment& env, PromptId x,
                                 ResponseId y) const {
  WeightVector w = WeightVector::one_hot(trained.heads.size(),
                                         static_cast<std::size_t>(objective));
  return beta * (trained.log_prob(env, x, y, w) - ref.log_prob(env, x, y, w));
}

std::vector<MarginRewardModel> train_margin_models(
    const Environment& env, const Policy& ref,
    const std::vector<PreferenceDataset>& datasets, const TrainConfig& config,
    TrainLog* log) {
  config.validate();
  std::vector<MarginRewardModel> models;
  models.reserve(datasets.size());
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    MarginRewardModel m;
    m.objective = static_cast<int>(k);
    m.ref = ref;
    m.beta = config.beta;
    m.trained = ref;
    if (!datasets[k].pairs.empty()) {
      WeightVector w = WeightVector::one_hot(datasets.size(), k);
      Rng rng(derive_seed(config.seed, 0x3A00 + k));
      run_phase(m.trained, ref, env, datasets[k], w, config.beta, {},
                static_cast<int>(k), config, rng, log);
    }
    models.push_back(std::move(m));
  }
  return models;
}

LossResult modpo_loss(const Policy& policy, const Policy& sft_ref,
                      const Environment& env, const PreferenceDataset& dataset,
                      const WeightVector& w,
                      const std::vector<MarginRewardModel>& margins,
                      double beta) {
  if (dataset.pairs.empty()) throw std::invalid_argument("modpo_loss: empty dataset");
  std::size_t k = static_cast<std::size_t>(dataset.objective);
  if (k >= w.size()) throw std::invalid_argument("modpo_loss: objective out of range");
  double w_k = w[k];
  if (w_k == 0.0)
    throw std::invalid_argument("modpo_loss: w_k = 0 on dataset k (loss undefined)");
  std::vector<double> per_pair(dataset.pairs.size(), 0.0);
  for (std::size_t i = 0; i < dataset.pairs.size(); ++i)
    per_pair[i] = margin_pair_diff(margins, env, dataset.pairs[i], w, k) / w_k;
  return preference_loss(policy, sft_ref, env, whole_dataset(dataset), w,
                         beta / w_k, per_pair);
}

Policy train_modpo(Policy policy, const Policy& sft_ref, const Environment& env,
                   const std::vector<PreferenceDataset>& datasets,
                   const WeightVector& w,
                   const std::vector<MarginRewardModel>& margins,
                   const TrainConfig& config, TrainLog* log) {
  config.validate();
  std::vector<int> order = config.dataset_order;
  if (order.empty()) {
    order.resize(datasets.size());
    std::iota(order.begin(), order.end(), 0);
  }
  for (int k : order) {
    const PreferenceDataset& d = datasets.at(static_cast<std::size_t>(k));
    std::size_t kk = static_cast<std::size_t>(d.objective);
    if (kk >= w.size())
      throw std::invalid_argument("train_modpo: objective out of range");
    if (w[kk] == 0.0) {
      if (log)
        log->warnings.push_back("skipping dataset " + std::to_string(k) +
                                ": weight component is zero");
      continue;
    }
    if (d.pairs.empty()) continue;
    std::vector<double> per_pair(d.pairs.size(), 0.0);
    for (std::size_t i = 0; i < d.pairs.size(); ++i)
      per_pair[i] = margin_pair_diff(margins, env, d.pairs[i], w, kk) / w[kk];
    Rng rng(derive_seed(config.seed, 0x4B00 + static_cast<std::uint64_t>(k)));
    // Sequential traversal approximates descent on the weighted sum
    // sum_k w_k * L_k of per-dataset preference losses. The phase loss
    // carries a 1/w_k scale, so its gradient is grad(L_k)/w_k; stepping with
    // lr * w_k^2 makes each phase contribute w_k * grad(L_k), i.e. its
    // weighted share, and keeps one-hot runs at the nominal learning rate.
    TrainConfig phase_config = config;
    phase_config.learning_rate = config.learning_rate * w[kk] * w[kk];
    run_phase(policy, sft_ref, env, d, w, config.beta / w[kk], per_pair, k,
              phase_config, rng, log);
  }
  return policy;
}

std::vector<WeightVector> weight_grid(int n, double step) {
  if (n <= 0) throw std::invalid_argument("weight_grid: N must be positive");
  if (!(step > 0.0 && step <= 1.0))
    throw std::invalid_argument("weight_grid: step must lie in (0,1]");
  long ticks = std::lround(1.0 / step);
  if (std::abs(static_cast<double>(ticks) * step - 1.0) > 1e-9)
    throw std::invalid_argument("weight_grid: step must divide 1 evenly");

  std::vector<WeightVector> grid;
  std::vector<long> counts(n, 0);
  // Descending lexicographic enumeration of lattice compositions.
  std::function<void(int, long)> rec = [&](int idx, long remaining) {
    if (idx == n - 1) {
      counts[idx] = remaining;
      std::vector<double> vals(n);
      for (int i = 0; i < n; ++i) {
        if (counts[i] == 0)
          vals[i] = 0.0;
        else if (counts[i] == ticks)
          vals[i] = 1.0;
        else
          vals[i] = static_cast<double>(counts[i]) * step;
      }
      grid.push_back(WeightVector::make(std::move(vals)));
      return;
    }
    for (long c = remaining; c >= 0; --c) {
      counts[idx] = c;
      rec(idx + 1, remaining - c);
    }
  };
  rec(0, ticks);
  return grid;
}

std::vector<std::pair<WeightVector, Policy>> sweep(
    const Policy& init, const Policy& sft_ref, const Environment& env,
    const std::vector<PreferenceDataset>& datasets,
    const std::vector<MarginRewardModel>& margins,
    const std::vector<WeightVector>& grid, const TrainConfig& config,
    int jobs) {
  if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
  std::vector<std::pair<WeightVector, Policy>> out;
  out.reserve(grid.size());
  for (const auto& w : grid) out.emplace_back(w, Policy());
  // Seeds derive from the weight itself so a run's result does not depend on
  // the grid order.
  auto weight_stream = [](const WeightVector& w) {
    std::uint64_t h = 0x5EED;
    for (double v : w.values()) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(bits));
      h = mix64(h ^ bits);
    }
    return h;
  };
  parallel_for(grid.size(), jobs, [&](std::size_t i) {
    TrainConfig c = config;
    c.seed = derive_seed(config.seed, weight_stream(grid[i]));
    out[i].second =
        train_modpo(init, sft_ref, env, datasets, grid[i], margins, c, nullptr);
  });
  return out;
}

}  // namespace moalign
