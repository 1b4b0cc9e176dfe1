#include "moalign/theory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "moalign/align.hpp"
#include "moalign/rng.hpp"
#include "moalign/util.hpp"

namespace moalign {

namespace {

Eigen::Map<const Eigen::VectorXd> as_vec(const FeatureVector& f) {
  return Eigen::Map<const Eigen::VectorXd>(f.values.data(),
                                           static_cast<long>(f.values.size()));
}

PromptId sample_prompt(const Environment& env, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double u = unit(rng);
  double acc = 0.0;
  for (int x = 0; x < env.n_prompts; ++x) {
    acc += env.rho[x];
    if (u < acc) return x;
  }
  return env.n_prompts - 1;
}

std::vector<LabeledPair> sample_labeled_pairs(const Environment& env, int k,
                                              long count, Rng& rng) {
  std::uniform_int_distribution<int> first(0, env.n_responses - 1);
  std::uniform_int_distribution<int> second(0, env.n_responses - 2);
  std::vector<LabeledPair> pairs;
  pairs.reserve(static_cast<std::size_t>(count));
  for (long j = 0; j < count; ++j) {
    PromptId x = sample_prompt(env, rng);
    int a = first(rng);
    int b = second(rng);
    if (b >= a) ++b;
    auto [win, lose] = sample_preference_label(env, k, x, a, b, rng);
    pairs.push_back({x, win, lose});
  }
  return pairs;
}

Eigen::MatrixXd sigma_from_diffs(int d,
                                 const std::vector<Eigen::VectorXd>& diffs) {
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
  for (const auto& v : diffs) sigma.noalias() += v * v.transpose();
  sigma /= static_cast<double>(diffs.size());
  return sigma;
}

double weighted_norm(const Eigen::VectorXd& v, const Eigen::MatrixXd& metric) {
  return std::sqrt(std::max(0.0, v.dot(metric * v)));
}

}  // namespace

double bt_gamma(double B) {
  return 1.0 / (2.0 + std::exp(-B) + std::exp(B));
}

Eigen::MatrixXd sigma_matrix(const Environment& env,
                             const PreferenceDataset& dataset) {
  if (dataset.pairs.empty()) throw std::invalid_argument("sigma_matrix: empty dataset");
  std::vector<Eigen::VectorXd> diffs;
  diffs.reserve(dataset.pairs.size());
  for (const auto& p : dataset.pairs)
    diffs.push_back(as_vec(env.features(p.prompt, p.chosen)) -
                    as_vec(env.features(p.prompt, p.rejected)));
  return sigma_from_diffs(env.dim, diffs);
}

Eigen::MatrixXd sigma_matrix(const Environment& env,
                             const std::vector<LabeledPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("sigma_matrix: empty dataset");
  std::vector<Eigen::VectorXd> diffs;
  diffs.reserve(pairs.size());
  for (const auto& p : pairs)
    diffs.push_back(as_vec(env.features(p.prompt, p.winner)) -
                    as_vec(env.features(p.prompt, p.loser)));
  return sigma_from_diffs(env.dim, diffs);
}

void project_theta(Eigen::VectorXd& theta, double B, bool* clipped) {
  theta.array() -= theta.mean();
  double norm = theta.norm();
  if (norm > B) {
    theta *= B / norm;
    if (clipped) *clipped = true;
  }
}

MleResult mle_fit(const Environment& env, const std::vector<LabeledPair>& pairs,
                  double lambda, double B, const MleOptions& opts) {
  if (env.dim < 2) throw std::invalid_argument("mle_fit: d must be >= 2");
  if (pairs.empty()) throw std::invalid_argument("mle_fit: no labeled pairs");
  const double n = static_cast<double>(pairs.size());

  std::vector<Eigen::VectorXd> diffs;
  diffs.reserve(pairs.size());
  for (const auto& p : pairs)
    diffs.push_back(as_vec(env.features(p.prompt, p.winner)) -
                    as_vec(env.features(p.prompt, p.loser)));

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(env.dim);
  MleResult result;
  for (int it = 0; it < opts.max_iterations; ++it) {
    Eigen::VectorXd grad = -lambda * theta;
    for (const auto& v : diffs) {
      double z = theta.dot(v);
      double s = z >= 0.0 ? std::exp(-z) / (1.0 + std::exp(-z))
                          : 1.0 / (1.0 + std::exp(z));
      grad.noalias() += s * v;
    }
    Eigen::VectorXd next = theta + (opts.learning_rate / n) * grad;
    project_theta(next, B, &result.hit_boundary);
    double delta = (next - theta).norm();
    theta = next;
    result.iterations = it + 1;
    if (delta <= opts.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.params = RewardParameters(
      std::vector<double>(theta.data(), theta.data() + theta.size()), B);
  return result;
}

double rho_bound(int d, long K, double delta, double lambda, double B, double C) {
  if (d <= 0 || K <= 0 || !(delta > 0.0 && delta < 1.0) || !(lambda >= 0.0) ||
      !(B > 0.0) || !(C > 0.0))
    throw std::invalid_argument("rho_bound: bad arguments");
  double g = bt_gamma(B);
  return C * std::sqrt((d + std::log(1.0 / delta)) / (g * g * static_cast<double>(K)) +
                       lambda * B * B);
}

double j_value(const Environment& env, const TabularPolicy& pi,
               const std::vector<RewardParameters>& theta, const WeightVector& w,
               double beta, const TabularPolicy& ref) {
  if (!(beta > 0.0)) throw std::invalid_argument("j_value: beta <= 0");
  if (theta.size() != w.size())
    throw std::invalid_argument("j_value: weight/theta count mismatch");
  if (static_cast<int>(pi.probs.size()) != env.n_prompts ||
      static_cast<int>(ref.probs.size()) != env.n_prompts)
    throw std::invalid_argument("j_value: support mismatch");
  double total = 0.0;
  for (int x = 0; x < env.n_prompts; ++x) {
    double inner = 0.0;
    for (int y = 0; y < env.n_responses; ++y) {
      double p = pi.probs[x][y];
      if (p <= 0.0) continue;
      if (ref.probs[x][y] <= 0.0)
        throw std::invalid_argument("j_value: ref assigns 0 where pi > 0");
      double r = 0.0;
      for (std::size_t k = 0; k < theta.size(); ++k)
        r += w[k] * dot(theta[k].theta, env.phi[x][y].values);
      inner += p * (r - beta * std::log(p / ref.probs[x][y]));
    }
    total += env.rho[x] * inner;
  }
  return total;
}

double suboptimality(const Environment& env, const TabularPolicy& pi_hat,
                     const WeightVector& w, double beta, const TabularPolicy& ref) {
  TabularPolicy pi_star = gibbs_oracle(env, env.theta_star, w, beta, ref);
  return j_value(env, pi_star, env.theta_star, w, beta, ref) -
         j_value(env, pi_hat, env.theta_star, w, beta, ref);
}

SubOptTerms subopt_decomposition(const Environment& env,
                                 const TabularPolicy& pi_hat,
                                 const std::vector<RewardParameters>& theta_hat,
                                 const WeightVector& w, double beta,
                                 const TabularPolicy& ref) {
  TabularPolicy pi_star = gibbs_oracle(env, env.theta_star, w, beta, ref);
  SubOptTerms t;
  auto reward_gap = [&](const TabularPolicy& pi, double sign) {
    double total = 0.0;
    for (int x = 0; x < env.n_prompts; ++x) {
      double inner = 0.0;
      for (int y = 0; y < env.n_responses; ++y) {
        double p = pi.probs[x][y];
        if (p <= 0.0) continue;
        double gap = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k)
          gap += w[k] * (dot(env.theta_star[k].theta, env.phi[x][y].values) -
                         dot(theta_hat[k].theta, env.phi[x][y].values));
        inner += p * gap;
      }
      total += env.rho[x] * inner;
    }
    return sign * total;
  };
  t.term_i = reward_gap(pi_star, 1.0);
  t.term_ii = reward_gap(pi_hat, -1.0);
  t.term_iii = j_value(env, pi_star, theta_hat, w, beta, ref) -
               j_value(env, pi_hat, theta_hat, w, beta, ref);
  return t;
}

double coverage_norm(const Environment& env, const Eigen::MatrixXd& sigma,
                     const TabularPolicy& pi, double lambda) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("coverage_norm: lambda must be positive");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(env.dim);
  for (int x = 0; x < env.n_prompts; ++x)
    for (int y = 0; y < env.n_responses; ++y)
      if (pi.probs[x][y] > 0.0)
        v += env.rho[x] * pi.probs[x][y] * as_vec(env.phi[x][y]);
  Eigen::MatrixXd a = sigma + lambda * Eigen::MatrixXd::Identity(env.dim, env.dim);
  Eigen::VectorXd s = a.llt().solve(v);
  return std::sqrt(std::max(0.0, v.dot(s)));
}

double coverage_norm(const Environment& env, const PreferenceDataset& dataset,
                     const TabularPolicy& pi, double lambda) {
  return coverage_norm(env, sigma_matrix(env, dataset), pi, lambda);
}

double theorem1_bound(const Environment& env,
                      const std::vector<PreferenceDataset>& datasets,
                      const TabularPolicy& pi_star, const WeightVector& w,
                      double rho, double lambda) {
  if (datasets.size() != w.size())
    throw std::invalid_argument("theorem1_bound: weight/dataset count mismatch");
  double sum = 0.0;
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    if (w[k] == 0.0) continue;
    sum += w[k] * coverage_norm(env, datasets[k], pi_star, lambda);
  }
  return 2.0 * rho * sum;
}

VerifyResult verify_lemma1(const TrialConfig& config, int trials,
                           std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("verify_lemma1: trials must be >= 1");
  VerifyResult result;
  result.rows.resize(static_cast<std::size_t>(trials));
  double rho = rho_bound(config.d, config.pairs, config.delta, config.lambda,
                         config.B, config.C);
  parallel_for(static_cast<std::size_t>(trials), config.jobs, [&](std::size_t t) {
    GenParams gp;
    gp.d = config.d;
    gp.n_objectives = config.n_objectives;
    gp.num_prompts = config.num_prompts;
    gp.candidates_per_prompt = config.candidates_per_prompt;
    gp.B = config.B;
    Environment env = Environment::generate(gp, derive_seed(seed, 2 * t));
    Rng rng(derive_seed(seed, 2 * t + 1));
    auto pairs = sample_labeled_pairs(env, 0, config.pairs, rng);
    MleResult mle = mle_fit(env, pairs, config.lambda, config.B);
    Eigen::MatrixXd metric =
        sigma_matrix(env, pairs) +
        config.lambda * Eigen::MatrixXd::Identity(env.dim, env.dim);
    Eigen::VectorXd diff(env.dim);
    for (int i = 0; i < env.dim; ++i)
      diff[i] = mle.params.theta[i] - env.theta_star[0].theta[i];
    TrialRow row;
    row.trial = static_cast<int>(t);
    row.rho = rho;
    row.error = weighted_norm(diff, metric);
    row.bound = rho;
    row.violated = row.error > rho;
    result.rows[t] = std::move(row);
  });
  int violations = 0;
  for (const auto& r : result.rows) violations += r.violated ? 1 : 0;
  result.violation_fraction = static_cast<double>(violations) / trials;
  return result;
}

VerifyResult verify_theorem1(const TrialConfig& config, int trials,
                             std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("verify_theorem1: trials must be >= 1");
  const int n = config.n_objectives;
  std::vector<WeightVector> weights;
  for (int k = 0; k < n; ++k) weights.push_back(WeightVector::one_hot(n, k));
  weights.push_back(WeightVector::uniform(n));

  double rho = rho_bound(config.d, config.pairs, config.delta, config.lambda,
                         config.B, config.C);
  VerifyResult result;
  result.rows.resize(static_cast<std::size_t>(trials) * weights.size());
  parallel_for(static_cast<std::size_t>(trials), config.jobs, [&](std::size_t t) {
    GenParams gp;
    gp.d = config.d;
    gp.n_objectives = n;
    gp.num_prompts = config.num_prompts;
    gp.candidates_per_prompt = config.candidates_per_prompt;
    gp.B = config.B;
    Environment env = Environment::generate(gp, derive_seed(seed, 3 * t));
    TabularPolicy ref = uniform_tabular(env);

    std::vector<RewardParameters> theta_hat;
    std::vector<PreferenceDataset> datasets;
    for (int k = 0; k < n; ++k) {
      Rng rng(derive_seed(seed, 3 * t + 1 + 7919 * static_cast<std::uint64_t>(k)));
      auto pairs = sample_labeled_pairs(env, k, config.pairs, rng);
      theta_hat.push_back(mle_fit(env, pairs, config.lambda, config.B).params);
      std::vector<PreferencePair> pp;
      pp.reserve(pairs.size());
      for (const auto& lp : pairs)
        pp.emplace_back(lp.prompt, lp.winner, lp.loser, k, 0.0, 0.0);
      datasets.emplace_back(k, std::move(pp));
    }
    for (std::size_t wi = 0; wi < weights.size(); ++wi) {
      const WeightVector& w = weights[wi];
      TabularPolicy pi_star = gibbs_oracle(env, env.theta_star, w, config.beta, ref);
      TabularPolicy pi_hat = gibbs_oracle(env, theta_hat, w, config.beta, ref);
      TrialRow row;
      row.trial = static_cast<int>(t);
      row.weight = w.values();
      row.rho = rho;
      row.error = suboptimality(env, pi_hat, w, config.beta, ref);
      row.bound = theorem1_bound(env, datasets, pi_star, w, rho, config.lambda);
      row.violated = row.error > row.bound;
      result.rows[t * weights.size() + wi] = std::move(row);
    }
  });
  int violations = 0;
  for (const auto& r : result.rows) violations += r.violated ? 1 : 0;
  result.violation_fraction =
      static_cast<double>(violations) / static_cast<double>(result.rows.size());
  return result;
}

double calibrate_constant(const TrialConfig& config, int trials,
                          std::uint64_t seed, double c_min, double c_max,
                          double c_step) {
  TrialConfig base = config;
  base.C = 1.0;
  VerifyResult ref = verify_lemma1(base, trials, seed);
  double unit_rho = rho_bound(config.d, config.pairs, config.delta,
                              config.lambda, config.B, 1.0);
  for (double c = c_min; c <= c_max + 1e-12; c += c_step) {
    int violations = 0;
    for (const auto& row : ref.rows)
      if (row.error > c * unit_rho) ++violations;
    if (static_cast<double>(violations) / trials <= config.delta) return c;
  }
  return c_max;
}

std::vector<std::pair<double, double>> coverage_comparison(
    const Environment& env, const std::vector<PreferenceDataset>& datasets,
    const TabularPolicy& pi_star, const TabularPolicy& pi_hat, double lambda) {
  std::vector<std::pair<double, double>> out;
  out.reserve(datasets.size());
  for (const auto& d : datasets) {
    Eigen::MatrixXd sigma = sigma_matrix(env, d);
    out.emplace_back(coverage_norm(env, sigma, pi_star, lambda),
                     coverage_norm(env, sigma, pi_hat, lambda));
  }
  return out;
}

}  // namespace moalign
