#pragma once

#include <span>
#include <vector>

#include "qtl/data.hpp"
#include "qtl/model.hpp"
#include "qtl/tensor.hpp"

namespace qtl::adversarial {

using transfer::Model;

struct AttackConfig {
  double epsilon = 0.1;
  double low = 0.0;
  double high = 1.0;
  /// Fraction of each adversarial-training batch replaced by FGSM samples.
  double mix_ratio = 0.5;

  /// Throws ConfigError unless epsilon >= 0, low < high, mix_ratio in [0,1].
  void validate() const;
  /// Bounds for unbounded inputs such as standardized feature vectors.
  static AttackConfig unbounded(double epsilon);
};

/// Elementwise clamp to [-epsilon, epsilon].
Tensor clip_perturbation(const Tensor& delta, double epsilon);

/// One-step L-inf attack on a batch against the true labels, evaluated in
/// eval mode. Returns an exact copy when epsilon is 0.
Tensor fgsm(Model& model, const Tensor& inputs, std::span<const std::size_t> labels,
            const AttackConfig& config);

/// Accuracy on FGSM-perturbed copies of every sample.
double evaluate_under_attack(Model& model, const data::Dataset& dataset, const AttackConfig& config);

/// Same loop as transfer::train, but the first round(mix_ratio * B) samples of
/// every shuffled batch are replaced by FGSM examples against the current
/// weights. After each epoch the test set is attacked at every budget in
/// `eval_budgets` (results in EpochRecord::attacked_accuracy).
std::vector<transfer::EpochRecord> adversarial_train(Model& model, const data::Dataset& train_set,
                                                     const data::Dataset* test_set, const AttackConfig& config,
                                                     const transfer::TrainConfig& train_config,
                                                     std::span<const double> eval_budgets = {});

}  // namespace qtl::adversarial
