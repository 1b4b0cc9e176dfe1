#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace moalign {

using PromptId = int;
using ResponseId = int;

// Tolerance for structural invariants (simplex sums, centering, norms).
inline constexpr double kStructuralTol = 1e-9;

double l2_norm(const std::vector<double>& v);
double dot(const std::vector<double>& a, const std::vector<double>& b);

/// Point on the N-simplex conditioning the policy. Stored normalized;
/// one-hot inputs pass through exactly.
class WeightVector {
 public:
  static WeightVector make(std::vector<double> values);
  static WeightVector one_hot(std::size_t n, std::size_t k);
  static WeightVector uniform(std::size_t n);

  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t k) const { return w_[k]; }
  const std::vector<double>& values() const { return w_; }

  /// w_{-k}: all components except index k, order preserved.
  std::vector<double> drop_component(std::size_t k) const;

  bool is_one_hot(std::size_t* which = nullptr) const;

 private:
  explicit WeightVector(std::vector<double> w) : w_(std::move(w)) {}
  std::vector<double> w_;
};

/// Bounded feature vector, Euclidean norm <= 1.
struct FeatureVector {
  std::vector<double> values;

  FeatureVector() = default;
  explicit FeatureVector(std::vector<double> v);
  std::size_t dim() const { return values.size(); }
};

/// Centered, norm-bounded reward parameters: <1, theta> = 0, ||theta|| <= B.
struct RewardParameters {
  std::vector<double> theta;
  double bound = 0.0;

  RewardParameters() = default;
  RewardParameters(std::vector<double> t, double b);
  std::size_t dim() const { return theta.size(); }
};

/// One chosen/rejected pair for a single objective.
struct PreferencePair {
  PromptId prompt = 0;
  ResponseId chosen = 0;
  ResponseId rejected = 0;
  int objective = 0;
  double score_chosen = 0.0;
  double score_rejected = 0.0;

  PreferencePair() = default;
  PreferencePair(PromptId x, ResponseId yw, ResponseId yl, int k,
                 double sw, double sl);
};

struct PreferenceDataset {
  int objective = 0;
  std::vector<PreferencePair> pairs;

  PreferenceDataset() = default;
  PreferenceDataset(int k, std::vector<PreferencePair> p);
  std::size_t size() const { return pairs.size(); }
};

struct Hyperparameters {
  double beta = 0.5;
  double lambda = 0.01;
  double delta = 0.1;
  double weight_grid_step = 0.2;
  int iterations = 3;
  long pairs_per_objective = 1000;
  double learning_rate = 0.05;
  int epochs = 60;
  int batch_size = 16;
  std::uint64_t seed = 1;

  void validate() const;
};

}  // namespace moalign
