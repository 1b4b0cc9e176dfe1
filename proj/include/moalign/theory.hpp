#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "moalign/core.hpp"
#include "moalign/env.hpp"
#include "moalign/policy.hpp"

namespace moalign {

struct LabeledPair {
  PromptId prompt = 0;
  ResponseId winner = 0;
  ResponseId loser = 0;
};

/// gamma = 1 / (2 + e^{-B} + e^{B}).
double bt_gamma(double B);

/// Empirical second-moment matrix of chosen-minus-rejected feature
/// differences, (1/K) sum (phi^w - phi^l)(phi^w - phi^l)^T.
Eigen::MatrixXd sigma_matrix(const Environment& env,
                             const PreferenceDataset& dataset);
Eigen::MatrixXd sigma_matrix(const Environment& env,
                             const std::vector<LabeledPair>& pairs);

/// Projection onto Theta_B: center so <1,theta>=0, then clip the norm to B.
void project_theta(Eigen::VectorXd& theta, double B, bool* clipped = nullptr);

struct MleOptions {
  double learning_rate = 0.5;
  int max_iterations = 2000;
  double tolerance = 1e-10;
};

struct MleResult {
  RewardParameters params;
  bool converged = false;
  bool hit_boundary = false;  // any projection step clipped the norm
  int iterations = 0;
};

/// Constrained Bradley-Terry MLE: projected gradient ascent on
/// sum log sigma(theta^T dphi) - (lambda/2)||theta||^2 over Theta_B.
MleResult mle_fit(const Environment& env, const std::vector<LabeledPair>& pairs,
                  double lambda, double B, const MleOptions& opts = {});

/// rho = C * sqrt((d + log(1/delta)) / (gamma^2 K) + lambda B^2).
double rho_bound(int d, long K, double delta, double lambda, double B, double C);

/// Exact KL-regularized objective on the finite space:
/// sum_x rho(x) sum_y pi(y|x) [w^T theta^T phi(x,y) - beta log(pi/ref)].
double j_value(const Environment& env, const TabularPolicy& pi,
               const std::vector<RewardParameters>& theta, const WeightVector& w,
               double beta, const TabularPolicy& ref);

/// J(pi*, theta*) - J(pi_hat, theta*), with pi* the Gibbs oracle of theta*.
double suboptimality(const Environment& env, const TabularPolicy& pi_hat,
                     const WeightVector& w, double beta, const TabularPolicy& ref);

struct SubOptTerms {
  double term_i = 0.0;    // E_{pi*}[w^T (theta* - theta_hat)^T phi]
  double term_ii = 0.0;   // E_{pi_hat}[w^T (theta_hat - theta*)^T phi]
  double term_iii = 0.0;  // J(pi*, theta_hat) - J(pi_hat, theta_hat)
  double sum() const { return term_i + term_ii + term_iii; }
};

SubOptTerms subopt_decomposition(const Environment& env,
                                 const TabularPolicy& pi_hat,
                                 const std::vector<RewardParameters>& theta_hat,
                                 const WeightVector& w, double beta,
                                 const TabularPolicy& ref);

/// || E_{x~rho, y~pi}[phi(x,y)] || in the (Sigma_D + lambda I)^{-1} norm.
double coverage_norm(const Environment& env, const Eigen::MatrixXd& sigma,
                     const TabularPolicy& pi, double lambda);
double coverage_norm(const Environment& env, const PreferenceDataset& dataset,
                     const TabularPolicy& pi, double lambda);

/// 2 * rho * sum_k w_k * coverage_norm(D_k, pi*, lambda).
double theorem1_bound(const Environment& env,
                      const std::vector<PreferenceDataset>& datasets,
                      const TabularPolicy& pi_star, const WeightVector& w,
                      double rho, double lambda);

struct TrialConfig {
  int d = 4;
  int n_objectives = 1;
  long pairs = 500;          // K
  double delta = 0.1;
  double lambda = 0.01;
  double B = 1.0;
  double C = 1.0;
  double beta = 0.5;
  int num_prompts = 20;
  int candidates_per_prompt = 6;
  int jobs = 1;
};

struct TrialRow {
  int trial = 0;
  std::vector<double> weight;  // empty for Lemma 1 rows
  double rho = 0.0;
  double error = 0.0;  // ||theta_hat - theta*||_{Sigma+lambda I} or SubOpt
  double bound = 0.0;
  bool violated = false;
};

struct VerifyResult {
  double violation_fraction = 0.0;
  std::vector<TrialRow> rows;
};

/// Monte-Carlo check of the MLE error bound: fresh environment and K
/// Bradley-Terry-labeled pairs per trial.
VerifyResult verify_lemma1(const TrialConfig& config, int trials,
                           std::uint64_t seed);

/// Monte-Carlo check of the sub-optimality bound; each trial is evaluated at
/// every one-hot weight plus the uniform weight.
VerifyResult verify_theorem1(const TrialConfig& config, int trials,
                             std::uint64_t seed);

/// Smallest C on a grid whose Lemma-1 violation fraction on a reference
/// suite is at most delta.
double calibrate_constant(const TrialConfig& config, int trials,
                          std::uint64_t seed, double c_min = 0.2,
                          double c_max = 6.0, double c_step = 0.05);

/// Per-objective (coverage norm of pi*, coverage norm of pi_hat); the
/// coverage inequality between them is reported, not asserted.
std::vector<std::pair<double, double>> coverage_comparison(
    const Environment& env, const std::vector<PreferenceDataset>& datasets,
    const TabularPolicy& pi_star, const TabularPolicy& pi_hat, double lambda);

}  // namespace moalign
