#include "qtl/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "qtl/error.hpp"
#include "qtl/loss.hpp"

namespace qtl::adversarial {

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be a finite value >= 0");
  if (!(low < high)) throw ConfigError("input bounds need low < high");
  if (!(mix_ratio >= 0.0 && mix_ratio <= 1.0)) throw ConfigError("mix_ratio must lie in [0, 1]");
}

AttackConfig AttackConfig::unbounded(double epsilon) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return {epsilon, -inf, inf, 0.5};
}

Tensor clip_perturbation(const Tensor& delta, double epsilon) {
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  Tensor out = delta;
  for (double& v : out.data()) v = std::clamp(v, -epsilon, epsilon);
  return out;
}

Tensor fgsm(Model& model, const Tensor& inputs, std::span<const std::size_t> labels, const AttackConfig& config) {
  config.validate();
  if (inputs.rank() < 1 || inputs.dim(0) != labels.size()) {
    throw ShapeError("fgsm: " + std::to_string(labels.size()) + " labels for inputs " + to_string(inputs.shape()));
  }
  if (config.epsilon == 0.0) return inputs;

  Model::Cache cache;
  const Tensor logits = model.forward(inputs, nn::Mode::Eval, cache);
  // The batch-mean loss only rescales each row's gradient by 1/B, so signs
  // match the per-sample loss.
  const auto lg = nn::softmax_cross_entropy(logits, labels);
  const auto grads = model.backward(cache, lg.logits_grad, false, true);
  const auto g = grads.input.data();

  Tensor out = inputs;
  auto x = out.data();
  const auto x0 = inputs.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
    double v = std::clamp(x0[i] + config.epsilon * s, config.low, config.high);
    // Rounding in the add can overshoot the budget by an ulp.
    v = x0[i] + std::clamp(v - x0[i], -config.epsilon, config.epsilon);
    x[i] = v;
  }
  return out;
}

double evaluate_under_attack(Model& model, const data::Dataset& dataset, const AttackConfig& config) {
  if (dataset.empty()) throw UsageError("cannot evaluate an empty dataset");
  config.validate();
  constexpr std::size_t kBatch = 64;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < dataset.size(); start += kBatch) {
    idx.resize(std::min(kBatch, dataset.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto labels = dataset.batch_labels(idx);
    const Tensor adv = fgsm(model, dataset.batch(idx), labels, config);
    const Tensor logits = model.logits(adv);
    for (std::size_t i = 0; i < labels.size(); ++i) correct += nn::argmax(logits.row(i)) == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

std::vector<transfer::EpochRecord> adversarial_train(Model& model, const data::Dataset& train_set,
                                                     const data::Dataset* test_set, const AttackConfig& config,
                                                     const transfer::TrainConfig& train_config,
                                                     std::span<const double> eval_budgets) {
  config.validate();
  for (double e : eval_budgets) {
    AttackConfig c = config;
    c.epsilon = e;
    c.validate();
  }
  transfer::TrainHooks hooks;
  if (config.mix_ratio > 0.0 && config.epsilon > 0.0) {
    hooks.perturb_batch = [&config](Model& m, Tensor& inputs, std::span<const std::size_t> labels) {
      const std::size_t b = labels.size();
      const auto k = std::min(b, static_cast<std::size_t>(std::llround(config.mix_ratio * static_cast<double>(b))));
      if (k == 0) return;
      const std::size_t stride = inputs.size() / b;
      Shape shape = inputs.shape();
      shape[0] = k;
      const auto first = inputs.data().begin();
      Tensor part(shape, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(k * stride)));
      const Tensor adv = fgsm(m, part, labels.first(k), config);
      std::copy(adv.data().begin(), adv.data().end(), inputs.data().begin());
    };
  }
  if (test_set && !eval_budgets.empty()) {
    hooks.on_epoch = [&](Model& m, transfer::EpochRecord& rec) {
      for (double e : eval_budgets) {
        AttackConfig c = config;
        c.epsilon = e;
        rec.attacked_accuracy.push_back(evaluate_under_attack(m, *test_set, c));
      }
    };
  }
  return transfer::train(model, train_set, test_set, train_config, hooks);
}

}  // namespace qtl::adversarial
