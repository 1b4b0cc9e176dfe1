// Shared utilities for the unit and acceptance test binaries: hand-built
// environments, random instances, a finite-difference gradient checker, a
// brute-force Pareto oracle, CLI invocation, and output-tree comparison.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "moalign/align.hpp"
#include "moalign/core.hpp"
#include "moalign/env.hpp"
#include "moalign/loop.hpp"
#include "moalign/pdc.hpp"
#include "moalign/policy.hpp"
#include "moalign/rng.hpp"

namespace testutil {

using namespace moalign;
namespace fs = std::filesystem;

// Small generated environment for property tests.
inline Environment small_env(std::uint64_t seed, int d = 4, int n = 2,
                             int prompts = 6, int cands = 5) {
  GenParams p;
  p.d = d;
  p.n_objectives = n;
  p.num_prompts = prompts;
  p.candidates_per_prompt = cands;
  p.prompts_per_patient = 2;
  p.group_count = 3;
  return Environment::generate(p, seed);
}

// Hand-built environment from explicit features and reward parameters.
// feats[x][y] are the raw feature vectors (norm <= 1); thetas are centered
// with norm <= B. Reference defaults to response 0, groups to a single
// label, patients to one per prompt, rho to uniform.
inline Environment make_env(std::vector<std::vector<std::vector<double>>> feats,
                            std::vector<std::vector<double>> thetas,
                            double B = 1.0, std::vector<int> reference = {},
                            std::vector<std::vector<int>> groups = {},
                            std::vector<int> patients = {}) {
  Environment env;
  env.n_prompts = static_cast<int>(feats.size());
  env.n_responses = static_cast<int>(feats.at(0).size());
  env.dim = static_cast<int>(feats.at(0).at(0).size());
  env.n_objectives = static_cast<int>(thetas.size());
  env.b = B;
  env.phi.resize(env.n_prompts);
  for (int x = 0; x < env.n_prompts; ++x)
    for (auto& f : feats[static_cast<std::size_t>(x)])
      env.phi[x].emplace_back(std::move(f));
  for (auto& t : thetas) env.theta_star.emplace_back(std::move(t), B);
  env.rho.assign(env.n_prompts, 1.0 / env.n_prompts);
  env.reference = reference.empty() ? std::vector<int>(env.n_prompts, 0)
                                    : std::move(reference);
  env.patient.resize(env.n_prompts);
  for (int x = 0; x < env.n_prompts; ++x) env.patient[x] = x;
  if (!patients.empty()) env.patient = std::move(patients);
  env.group = groups.empty()
                  ? std::vector<std::vector<int>>(
                        env.n_prompts, std::vector<int>(env.n_responses, 0))
                  : std::move(groups);
  env.validate();
  return env;
}

inline Policy random_policy(Rng& rng, int d, int n, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Policy p(d, n);
  for (double& v : p.base) v = u(rng);
  for (auto& h : p.heads)
    for (double& v : h) v = u(rng);
  return p;
}

// Random preference dataset over an environment; labels are arbitrary but
// chosen != rejected and all pairs share the objective.
inline PreferenceDataset random_dataset(const Environment& env, int objective,
                                        int n_pairs, Rng& rng) {
  std::uniform_int_distribution<int> px(0, env.n_prompts - 1);
  std::uniform_int_distribution<int> py(0, env.n_responses - 1);
  std::vector<PreferencePair> pairs;
  pairs.reserve(static_cast<std::size_t>(n_pairs));
  while (static_cast<int>(pairs.size()) < n_pairs) {
    int x = px(rng), a = py(rng), b = py(rng);
    if (a == b) continue;
    double ra = env.true_reward(objective, x, a);
    double rb = env.true_reward(objective, x, b);
    if (ra >= rb)
      pairs.emplace_back(x, a, b, objective, ra, rb);
    else
      pairs.emplace_back(x, b, a, objective, rb, ra);
  }
  return PreferenceDataset(objective, std::move(pairs));
}

// Random centered reward parameters with norm <= B.
inline RewardParameters random_theta(Rng& rng, int d, double B) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> t(static_cast<std::size_t>(d));
  double norm = 0.0;
  while (norm < 1e-9) {
    double mean = 0.0;
    for (double& c : t) {
      c = g(rng);
      mean += c;
    }
    mean /= d;
    for (double& c : t) c -= mean;
    norm = l2_norm(t);
  }
  double scale = B * u(rng) / norm;
  for (double& c : t) c *= scale;
  return RewardParameters(std::move(t), B);
}

// Largest mismatch between an analytic gradient and central finite
// differences of `loss` over all policy parameters. Relative error with an
// absolute floor so finite-difference truncation noise on near-zero
// coordinates is not amplified.
inline double max_grad_error(Policy policy,
                             const std::function<double(const Policy&)>& loss,
                             const Policy& grad, double step = 1e-5) {
  double worst = 0.0;
  auto probe = [&](double& param, double g) {
    double orig = param;
    param = orig + step;
    double up = loss(policy);
    param = orig - step;
    double down = loss(policy);
    param = orig;
    double fd = (up - down) / (2.0 * step);
    double denom = std::max({std::abs(fd), std::abs(g), 1e-4});
    worst = std::max(worst, std::abs(fd - g) / denom);
  };
  for (int i = 0; i < policy.dim(); ++i) probe(policy.base[i], grad.base[i]);
  for (int k = 0; k < policy.n_heads(); ++k)
    for (int i = 0; i < policy.dim(); ++i)
      probe(policy.heads[k][i], grad.heads[k][i]);
  return worst;
}

// Brute-force Pareto filter: keep a point iff no other point is at least as
// good on both axes and strictly better on one. Sorted like pareto_front.
inline std::vector<ParetoPoint> brute_force_front(
    const std::vector<ParetoPoint>& points, std::pair<int, int> axes) {
  auto a = [&](const ParetoPoint& p) { return p.values.at(axes.first); };
  auto b = [&](const ParetoPoint& p) { return p.values.at(axes.second); };
  std::vector<ParetoPoint> front;
  for (const auto& p : points) {
    bool dominated = false;
    for (const auto& q : points) {
      if (a(q) >= a(p) && b(q) >= b(p) && (a(q) > a(p) || b(q) > b(p))) {
        dominated = true;
        break;
      }
    }
    if (!dominated) front.push_back(p);
  }
  std::sort(front.begin(), front.end(),
            [&](const ParetoPoint& x, const ParetoPoint& y) {
              if (a(x) != a(y)) return a(x) < a(y);
              return b(x) < b(y);
            });
  return front;
}

inline bool same_points(const std::vector<ParetoPoint>& x,
                        const std::vector<ParetoPoint>& y) {
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i].values != y[i].values) return false;
  return true;
}

// ---- CLI / filesystem helpers -------------------------------------------

struct CliResult {
  int exit_code = -1;
  std::string output;
};

inline fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("moalign_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the CLI binary with the given argument string; captures stdout+stderr.
inline CliResult run_cli(const std::string& args,
                         const std::string& env_prefix = "") {
  static int counter = 0;
  fs::path log = fs::temp_directory_path() /
                 ("moalign_cli_log_" + std::to_string(counter++) + ".txt");
  std::string cmd = env_prefix + std::string(MOALIGN_CLI_PATH) + " " + args +
                    " > " + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
  r.output = slurp(log);
  fs::remove(log);
  return r;
}

// Byte-level comparison of two directory trees (same relative paths, same
// file contents).
inline bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> rel_a, rel_b;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) rel_a.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) rel_b.push_back(fs::relative(e.path(), b));
  std::sort(rel_a.begin(), rel_a.end());
  std::sort(rel_b.begin(), rel_b.end());
  if (rel_a != rel_b) return false;
  for (const auto& rel : rel_a)
    if (slurp(a / rel) != slurp(b / rel)) return false;
  return true;
}

}  // namespace testutil
