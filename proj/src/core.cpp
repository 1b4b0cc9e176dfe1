#include "moalign/core.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace moalign {

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

WeightVector WeightVector::make(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("WeightVector: empty input");
  double sum = 0.0;
  for (double v : values) {
    if (!(v >= 0.0)) throw std::invalid_argument("WeightVector: negative component");
    sum += v;
  }
  if (sum <= 0.0)
    throw std::invalid_argument(
        "WeightVector: all components are zero; cannot normalize to the simplex");
  if (sum != 1.0) {
    for (double& v : values) v /= sum;
  }
  return WeightVector(std::move(values));
}

WeightVector WeightVector::one_hot(std::size_t n, std::size_t k) {
  if (k >= n) throw std::invalid_argument("WeightVector::one_hot: index out of range");
  std::vector<double> w(n, 0.0);
  w[k] = 1.0;
  return WeightVector(std::move(w));
}

WeightVector WeightVector::uniform(std::size_t n) {
  if (n == 0) throw std::invalid_argument("WeightVector::uniform: empty");
  return WeightVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

std::vector<double> WeightVector::drop_component(std::size_t k) const {
  if (k >= w_.size())
    throw std::invalid_argument("drop_component: index " + std::to_string(k) +
                                " out of range for N=" + std::to_string(w_.size()));
  std::vector<double> out;
  out.reserve(w_.size() - 1);
  for (std::size_t i = 0; i < w_.size(); ++i)
    if (i != k) out.push_back(w_[i]);
  return out;
}

bool WeightVector::is_one_hot(std::size_t* which) const {
  for (std::size_t i = 0; i < w_.size(); ++i) {
    if (w_[i] == 1.0) {
      if (which) *which = i;
      return true;
    }
    if (w_[i] != 0.0) return false;
  }
  return false;
}

FeatureVector::FeatureVector(std::vector<double> v) : values(std::move(v)) {
  if (l2_norm(values) > 1.0 + kStructuralTol)
    throw std::invalid_argument("FeatureVector: Euclidean norm exceeds 1");
}

RewardParameters::RewardParameters(std::vector<double> t, double b)
    : theta(std::move(t)), bound(b) {
  if (!(bound > 0.0)) throw std::invalid_argument("RewardParameters: bound must be positive");
  double s = 0.0;
  for (double x : theta) s += x;
  if (std::abs(s) > kStructuralTol)
    throw std::invalid_argument("RewardParameters: <1, theta> != 0");
  if (l2_norm(theta) > bound + kStructuralTol)
    throw std::invalid_argument("RewardParameters: ||theta|| exceeds bound");
}

PreferencePair::PreferencePair(PromptId x, ResponseId yw, ResponseId yl, int k,
                               double sw, double sl)
    : prompt(x), chosen(yw), rejected(yl), objective(k),
      score_chosen(sw), score_rejected(sl) {
  if (chosen == rejected)
    throw std::invalid_argument("PreferencePair: chosen and rejected must differ");
  if (prompt < 0 || chosen < 0 || rejected < 0 || objective < 0)
    throw std::invalid_argument("PreferencePair: negative id");
}

PreferenceDataset::PreferenceDataset(int k, std::vector<PreferencePair> p)
    : objective(k), pairs(std::move(p)) {
  for (const auto& pr : pairs)
    if (pr.objective != objective)
      throw std::invalid_argument("PreferenceDataset: mixed objectives");
}

void Hyperparameters::validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("Hyperparameters: beta must be positive");
  if (!(lambda >= 0.0)) throw std::invalid_argument("Hyperparameters: lambda must be non-negative");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("Hyperparameters: delta must lie in (0,1)");
  if (iterations < 0)
    throw std::invalid_argument("Hyperparameters: iterations must be non-negative");
  if (pairs_per_objective < 0)
    throw std::invalid_argument("Hyperparameters: pairs_per_objective must be non-negative");
  if (!(learning_rate > 0.0) || epochs < 0 || batch_size <= 0)
    throw std::invalid_argument("Hyperparameters: bad optimizer settings");
}

}  // namespace moalign
