#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "qtl/error.hpp"
#include "qtl/loss.hpp"
#include "qtl/model.hpp"

namespace qtl::transfer {

namespace {

constexpr std::size_t kEvalBatch = 64;

struct Tally {
  std::size_t correct = 0;
  double loss_sum = 0.0;
};

Tally tally(const Tensor& logits, std::span<const std::size_t> labels) {
  const Tensor probs = nn::softmax(logits);
  Tally t;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (nn::argmax(logits.row(i)) == labels[i]) ++t.correct;
    t.loss_sum += nn::cross_entropy(probs.row(i), labels[i]);
  }
  return t;
}

}  // namespace

Evaluation evaluate_logits(const Tensor& logits, std::span<const std::size_t> labels) {
  if (labels.empty()) throw UsageError("cannot evaluate an empty dataset");
  const Tally t = tally(logits, labels);
  const auto n = static_cast<double>(labels.size());
  return {static_cast<double>(t.correct) / n, t.loss_sum / n};
}

Evaluation evaluate(Model& model, const data::Dataset& dataset) {
  if (dataset.empty()) throw UsageError("cannot evaluate an empty dataset");
  Tally total;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < dataset.size(); start += kEvalBatch) {
    idx.resize(std::min(kEvalBatch, dataset.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tally t = tally(model.logits(dataset.batch(idx)), dataset.batch_labels(idx));
    total.correct += t.correct;
    total.loss_sum += t.loss_sum;
  }
  const auto n = static_cast<double>(dataset.size());
  return {static_cast<double>(total.correct) / n, total.loss_sum / n};
}

std::vector<EpochRecord> train(Model& model, const data::Dataset& train_set, const data::Dataset* test_set,
                               const TrainConfig& config, const TrainHooks& hooks) {
  if (config.epochs < 1) throw ConfigError("training needs at least one epoch");
  if (config.batch_size < 1) throw ConfigError("batch size must be positive");
  if (train_set.empty()) throw UsageError("training set is empty");
  nn::Optimizer optimizer(config.optimizer);
  std::mt19937_64 rng(config.shuffle_seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<EpochRecord> history;
  Model::Cache cache;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start_time = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = nn::scheduled_lr(config.optimizer, epoch, config.epochs);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(config.batch_size, order.size() - start));
      Tensor inputs = train_set.batch(idx);
      const auto labels = train_set.batch_labels(idx);
      if (hooks.perturb_batch) hooks.perturb_batch(model, inputs, labels);
      const Tensor logits = model.forward(inputs, nn::Mode::Train, cache);
      const auto lg = nn::softmax_cross_entropy(logits, labels);
      if (!std::isfinite(lg.mean_loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch) + " (lr " + std::to_string(rec.lr) + ")");
      }
      const auto grads = model.backward(cache, lg.logits_grad, true, false);
      optimizer.step(model.slots(grads), rec.lr);
      loss_sum += lg.mean_loss * static_cast<double>(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) correct += nn::argmax(logits.row(i)) == labels[i] ? 1 : 0;
    }
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (test_set) {
      const Evaluation e = evaluate(model, *test_set);
      rec.test_accuracy = e.accuracy;
      rec.test_loss = e.mean_loss;
    }
    if (hooks.on_epoch) hooks.on_epoch(model, rec);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    history.push_back(std::move(rec));
  }
  return history;
}

PretrainResult pretrain(const ModelSpec& spec, const data::Dataset& source, const TrainConfig& config,
                        std::uint64_t init_seed) {
  if (source.empty()) throw UsageError("source dataset is empty");
  if (source.sample_shape() != spec.sample_shape) {
    throw ShapeError("source samples " + to_string(source.sample_shape()) + " vs model input " +
                     to_string(spec.sample_shape));
  }
  PretrainResult r{build_source_model(spec, source.class_count(), init_seed), {}, {}};
  r.history = train(r.source_model, source, nullptr, config);
  r.checkpoint = extractor_checkpoint(r.source_model, init_seed, "pretrain");
  return r;
}

}  // namespace qtl::transfer
