#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qtl/tensor.hpp"

namespace qtl::nn {

inline constexpr double kProbabilityFloor = 1e-12;

/// Softmax along the final axis, max-subtracted.
Tensor softmax(const Tensor& logits);

/// -log(max(p[label], 1e-12)). Throws UsageError for a label outside probs.
double cross_entropy(std::span<const double> probs, std::size_t label);

struct LossAndGrad {
  double mean_loss = 0.0;
  /// d mean_loss / d logits, shaped like the logits.
  Tensor logits_grad;
};

/// Mean softmax cross-entropy over a (N, C) batch of logits.
LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

/// Index of the largest value; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace qtl::nn
