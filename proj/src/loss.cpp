#include "qtl/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qtl/error.hpp"

namespace qtl::nn {

Tensor softmax(const Tensor& logits) {
  if (logits.rank() == 0 || logits.shape().back() == 0) throw ShapeError("softmax needs a non-empty final axis");
  Tensor out = logits;
  const std::size_t width = logits.shape().back();
  auto data = out.data();
  for (std::size_t base = 0; base < data.size(); base += width) {
    auto row = data.subspan(base, width);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (auto& v : row) {
      v = std::exp(v - mx);
      total += v;
    }
    for (auto& v : row) v /= total;
  }
  return out;
}

double cross_entropy(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) {
    throw UsageError("label " + std::to_string(label) + " outside " + std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[label], kProbabilityFloor));
}

LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("logits " + to_string(logits.shape()) + " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0);
  LossAndGrad r{0.0, softmax(logits)};
  for (std::size_t i = 0; i < n; ++i) {
    auto row = r.logits_grad.row(i);
    r.mean_loss += cross_entropy(row, labels[i]);
    row[labels[i]] -= 1.0;
    for (auto& v : row) v /= static_cast<double>(n);
  }
  r.mean_loss /= static_cast<double>(n);
  return r;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace qtl::nn
