#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qtl/checkpoint.hpp"
#include "qtl/data.hpp"
#include "qtl/layers.hpp"
#include "qtl/optimizer.hpp"
#include "qtl/qvc.hpp"

namespace qtl::transfer {

enum class Regime { ClassicalTL, ClassicalNoTL, QuantumTL, QuantumNoTL };

std::string to_string(Regime regime);
using qtl::to_string;
/// Accepts "classical_tl", "classical_notl", "quantum_tl", "quantum_notl".
Regime parse_regime(const std::string& s);
bool uses_transfer(Regime regime);
bool uses_quantum(Regime regime);

struct QuantumHead {
  qvc::QvcParams params;
  qvc::EncodingSpec encoding;
  bool frozen = false;
};

/// Layers between reduction and readout. Empty in built models: classical
/// regimes train one dense readout on the extracted features.
struct ClassicalHead {
  nn::Sequential layers;
};

/// Architecture and initialization knobs shared by every regime.
struct ModelSpec {
  data::DatasetKind input_kind = data::DatasetKind::Image;
  Shape sample_shape{1, 16, 16};
  std::size_t classes = 2;
  std::size_t conv_channels = 8;
  std::size_t hidden_width = 32;
  int n_qubits = 6;
  int depth = 6;
  qvc::EncodingSpec encoding;
  qvc::Entanglement entanglement = qvc::Entanglement::Linear;
  double init_spread = 0.01;
  /// NoTL regimes only: readout is a fixed random matrix.
  bool fixed_readout = false;
};

/// extractor -> reduction -> head -> readout. Empty stages are identities.
class Model {
 public:
  nn::Sequential extractor;
  nn::Sequential reduction;
  std::variant<ClassicalHead, QuantumHead> head;
  nn::Sequential readout;

  struct Cache {
    std::vector<nn::Cache> extractor, reduction, head, readout;
    Tensor head_input;  ///< quantum head only
  };

  struct Grads {
    Tensor input;  ///< empty unless requested
    std::vector<Tensor> extractor, reduction, head, readout;
    std::vector<double> quantum;
  };

  /// Class logits for a batch.
  Tensor forward(const Tensor& inputs, nn::Mode mode, Cache& cache);
  /// Eval-mode logits.
  Tensor logits(const Tensor& inputs);

  Grads backward(const Cache& cache, const Tensor& logits_grad, bool want_param_grads, bool want_input_grad);

  /// Optimizer slots for every parameter, frozen ones included and marked.
  std::vector<nn::ParamSlot> slots(const Grads& grads);

  [[nodiscard]] bool is_quantum() const { return std::holds_alternative<QuantumHead>(head); }
  [[nodiscard]] std::size_t quantum_parameter_count() const;
  [[nodiscard]] std::size_t trainable_parameter_count();
  /// Layers (and the quantum head) whose parameters are frozen.
  [[nodiscard]] std::size_t frozen_layer_count() const;
  [[nodiscard]] std::string fingerprint() const;
};

/// Feature extractor for the input kind: a small conv/residual stack for
/// images, nothing for precomputed feature vectors.
nn::Sequential make_extractor(const ModelSpec& spec);
/// Width of the extractor output for the spec.
std::size_t extractor_width(const ModelSpec& spec);

/// Freezes every extractor layer and unfreezes reduction, head and readout.
void freeze(Model& model);

/// Builds the regime's model. TL regimes on image data load the extractor
/// from `checkpoint` and freeze it; NoTL regimes must not get one.
Model build(Regime regime, const ModelSpec& spec, const std::optional<Checkpoint>& checkpoint,
            std::uint64_t init_seed);

/// Extractor followed by a dense readout over `source_classes`, used for
/// pretraining.
Model build_source_model(const ModelSpec& spec, std::size_t source_classes, std::uint64_t init_seed);

Checkpoint extractor_checkpoint(Model& model, std::uint64_t seed, const std::string& regime);
/// Throws CheckpointError on a fingerprint or tensor shape mismatch.
void load_extractor(Model& model, const Checkpoint& checkpoint);

Checkpoint model_checkpoint(Model& model, std::uint64_t seed, const std::string& regime);
void load_model(Model& model, const Checkpoint& checkpoint);

// Training ------------------------------------------------------------------

struct TrainConfig {
  int epochs = 50;
  std::size_t batch_size = 16;
  nn::OptimizerConfig optimizer;
  std::uint64_t shuffle_seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  /// Filled by adversarial training hooks, one per attack budget.
  std::vector<double> attacked_accuracy;
  /// Wall-clock duration of the epoch, evaluation included.
  double wall_seconds = 0.0;
};

struct TrainHooks {
  /// Called on each mini-batch before the update; may rewrite inputs.
  std::function<void(Model&, Tensor& inputs, std::span<const std::size_t> labels)> perturb_batch;
  /// Called after each epoch's evaluation.
  std::function<void(Model&, EpochRecord&)> on_epoch;
};

/// Mini-batch training with a seeded per-epoch shuffle. `test` may be null.
/// Throws DivergenceError on a non-finite loss.
std::vector<EpochRecord> train(Model& model, const data::Dataset& train_set, const data::Dataset* test_set,
                               const TrainConfig& config, const TrainHooks& hooks = {});

struct Evaluation {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

/// Eval-mode accuracy (argmax, ties to the lowest index) and mean loss.
Evaluation evaluate(Model& model, const data::Dataset& dataset);

/// Evaluation of precomputed logits against labels.
Evaluation evaluate_logits(const Tensor& logits, std::span<const std::size_t> labels);

struct PretrainResult {
  Model source_model;
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
};

/// Trains extractor + readout on the source task and checkpoints the
/// extractor.
PretrainResult pretrain(const ModelSpec& spec, const data::Dataset& source, const TrainConfig& config,
                        std::uint64_t init_seed);

}  // namespace qtl::transfer
