#include "moalign/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace moalign {

Environment Environment::generate(const GenParams& p, std::uint64_t seed) {
  if (p.d < 2)
    throw std::invalid_argument(
        "Environment::generate: d must be >= 2 (the centering constraint "
        "<1,theta>=0 forces theta=0 when d=1)");
  if (p.n_objectives <= 0 || p.num_prompts <= 0 || p.candidates_per_prompt <= 0)
    throw std::invalid_argument("Environment::generate: counts must be positive");
  if (!(p.B > 0.0)) throw std::invalid_argument("Environment::generate: B must be positive");
  if (p.prompts_per_patient <= 0 || p.group_count <= 0)
    throw std::invalid_argument("Environment::generate: bad grouping parameters");
  if (p.prompt_noise < 0.0)
    throw std::invalid_argument("Environment::generate: prompt_noise must be >= 0");

  Environment env;
  env.dim = p.d;
  env.n_objectives = p.n_objectives;
  env.n_prompts = p.num_prompts;
  env.n_responses = p.candidates_per_prompt;
  env.b = p.B;

  Rng rng(derive_seed(seed, 0xE0F));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Features: a shared per-response direction plus a smaller per-(prompt,
  // response) perturbation, rescaled so the max norm over the whole
  // environment is exactly 1. The response-dominated structure mirrors
  // report quality being mostly intrinsic to the report text: similar
  // responses score similarly across prompts, which is what makes grouped
  // cross-prompt rejected sampling meaningful.
  // The common offset keeps typical pairwise similarities well above zero,
  // as real reports share boilerplate. Coordinate 0 — the designated group
  // coordinate — carries only per-(prompt, response) variation, so group
  // labels cut across response identity rather than mirroring it.
  const double kPromptNoise = p.prompt_noise;
  constexpr double kGroupSpread = 1.0;
  env.phi.assign(env.n_prompts, std::vector<FeatureVector>(env.n_responses));
  constexpr double kOffsetScale = 0.5;
  std::vector<double> offset(env.dim, 0.0);
  for (int i = 1; i < env.dim; ++i) offset[i] = kOffsetScale * gauss(rng);
  std::vector<std::vector<double>> response_core(
      env.n_responses, std::vector<double>(env.dim, 0.0));
  for (auto& core : response_core)
    for (int i = 1; i < env.dim; ++i) core[i] = gauss(rng);
  double max_norm = 0.0;
  std::vector<std::vector<std::vector<double>>> raw(
      env.n_prompts, std::vector<std::vector<double>>(env.n_responses));
  for (int x = 0; x < env.n_prompts; ++x) {
    for (int y = 0; y < env.n_responses; ++y) {
      std::vector<double> v(env.dim);
      v[0] = kGroupSpread * gauss(rng);
      for (int i = 1; i < env.dim; ++i)
        v[i] = offset[i] + response_core[y][i] + kPromptNoise * gauss(rng);
      max_norm = std::max(max_norm, l2_norm(v));
      raw[x][y] = std::move(v);
    }
  }
  if (max_norm <= 0.0) max_norm = 1.0;
  for (int x = 0; x < env.n_prompts; ++x) {
    for (int y = 0; y < env.n_responses; ++y) {
      for (double& c : raw[x][y]) c /= max_norm;
      env.phi[x][y] = FeatureVector(std::move(raw[x][y]));
    }
  }

  // theta*_k: centered direction scaled to B*u with u in (0,1].
  env.theta_star.reserve(env.n_objectives);
  for (int k = 0; k < env.n_objectives; ++k) {
    std::vector<double> t(env.dim);
    double norm = 0.0;
    while (norm < 1e-12) {
      for (double& c : t) c = gauss(rng);
      double mean = 0.0;
      for (double c : t) mean += c;
      mean /= static_cast<double>(env.dim);
      for (double& c : t) c -= mean;
      norm = l2_norm(t);
    }
    double u = 1.0 - unit(rng);  // (0, 1]
    double scale = env.b * u / norm;
    for (double& c : t) c *= scale;
    env.theta_star.emplace_back(std::move(t), env.b);
  }

  // Prompt distribution.
  env.rho.assign(env.n_prompts, 0.0);
  double z = 0.0;
  for (int x = 0; x < env.n_prompts; ++x) {
    env.rho[x] = p.rho_alpha == 0.0
                     ? 1.0
                     : std::pow(static_cast<double>(x + 1), -p.rho_alpha);
    z += env.rho[x];
  }
  for (double& r : env.rho) r /= z;

  // Reference response per prompt.
  std::uniform_int_distribution<int> pick(0, env.n_responses - 1);
  env.reference.resize(env.n_prompts);
  for (int x = 0; x < env.n_prompts; ++x) env.reference[x] = pick(rng);

  // Patients hold consecutive prompts ("views").
  env.patient.resize(env.n_prompts);
  for (int x = 0; x < env.n_prompts; ++x) env.patient[x] = x / p.prompts_per_patient;

  // Group labels by thresholding the first feature coordinate into
  // equal-width bins over [-0.5, 0.5] (clamped); gaussian features
  // concentrate mass in the middle bins, giving a skewed group-size profile.
  env.group.assign(env.n_prompts, std::vector<int>(env.n_responses, 0));
  for (int x = 0; x < env.n_prompts; ++x) {
    for (int y = 0; y < env.n_responses; ++y) {
      double c0 = env.phi[x][y].values[0];
      int bin = static_cast<int>(std::floor((c0 + 0.5) * p.group_count));
      env.group[x][y] = std::clamp(bin, 0, p.group_count - 1);
    }
  }

  env.validate();
  return env;
}

void Environment::check_prompt(PromptId x) const {
  if (x < 0 || x >= n_prompts)
    throw std::out_of_range("Environment: prompt id out of range");
}

void Environment::check_ids(PromptId x, ResponseId y) const {
  check_prompt(x);
  if (y < 0 || y >= n_responses)
    throw std::out_of_range("Environment: response id out of range");
}

void Environment::validate() const {
  if (dim < 2) throw std::invalid_argument("Environment: d must be >= 2");
  double s = 0.0;
  for (double r : rho) {
    if (r < 0.0) throw std::invalid_argument("Environment: negative rho");
    s += r;
  }
  if (std::abs(s - 1.0) > kStructuralTol)
    throw std::invalid_argument("Environment: rho does not sum to 1");
  if (static_cast<int>(theta_star.size()) != n_objectives)
    throw std::invalid_argument("Environment: theta_star count mismatch");
  for (const auto& row : phi)
    for (const auto& f : row)
      if (l2_norm(f.values) > 1.0 + kStructuralTol)
        throw std::invalid_argument("Environment: feature norm exceeds 1");
  for (int x = 0; x < n_prompts; ++x)
    if (reference[x] < 0 || reference[x] >= n_responses)
      throw std::invalid_argument("Environment: reference response is not a candidate");
}

const FeatureVector& Environment::features(PromptId x, ResponseId y) const {
  check_ids(x, y);
  return phi[x][y];
}

ResponseId Environment::reference_response(PromptId x) const {
  check_prompt(x);
  return reference[x];
}

double Environment::true_reward(int k, PromptId x, ResponseId y) const {
  if (k < 0 || k >= n_objectives)
    throw std::out_of_range("true_reward: objective index out of range");
  check_ids(x, y);
  return dot(theta_star[k].theta, phi[x][y].values);
}

double Environment::similarity(PromptId xa, ResponseId ya,
                               PromptId xb, ResponseId yb) const {
  check_ids(xa, ya);
  check_ids(xb, yb);
  const auto& a = phi[xa][ya].values;
  const auto& bvec = phi[xb][yb].values;
  double na = l2_norm(a), nb = l2_norm(bvec);
  double cosine;
  if (na == 0.0 && nb == 0.0)
    cosine = 1.0;
  else if (na == 0.0 || nb == 0.0)
    cosine = 0.0;
  else
    cosine = std::clamp(dot(a, bvec) / (na * nb), -1.0, 1.0);
  return (1.0 + cosine) / 2.0;
}

double Environment::similarity_to_reference(PromptId x, ResponseId y) const {
  return similarity(x, y, x, reference_response(x));
}

std::vector<Scorer> Environment::builtin_scorers() const {
  std::vector<Scorer> out;
  out.reserve(n_objectives);
  for (int k = 0; k < n_objectives; ++k) {
    Scorer s;
    s.name = "metric_" + std::to_string(k);
    // Scorer 0 plays the RadCliQ role: lower is better.
    s.higher_better = (k != 0);
    double sign = s.higher_better ? 1.0 : -1.0;
    const Environment* self = this;
    s.score = [self, k, sign](PromptId x, ResponseId y) {
      return sign * self->true_reward(k, x, y);
    };
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace moalign
