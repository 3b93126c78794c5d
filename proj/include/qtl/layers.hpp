#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "qtl/tensor.hpp"

namespace qtl::nn {

enum class Mode { Train, Eval };

enum class LayerKind { Conv2D, ReLU, MaxPool, Dense, BatchNorm, ResidualBlock, Flatten };

std::string to_string(LayerKind kind);
using qtl::to_string;

class Layer;

/// Intermediates saved by one forward call, consumed by the matching
/// backward call.
struct Cache {
  const Layer* owner = nullptr;
  Mode mode = Mode::Eval;
  std::vector<Tensor> saved;
  std::vector<Cache> children;
};

struct Parameter {
  std::string name;
  Tensor value;
};

struct Gradients {
  Tensor input_grad;
  /// Aligned with Layer::parameters(); empty when not requested.
  std::vector<Tensor> param_grads;
};

/// A differentiable layer operating on batch-first tensors.
class Layer {
 public:
  virtual ~Layer() = default;

  [[nodiscard]] virtual LayerKind kind() const = 0;
  /// Architecture description; equal fingerprints mean interchangeable weights.
  [[nodiscard]] virtual std::string fingerprint() const = 0;
  /// Output shape for a batch-first input shape; throws ShapeError.
  [[nodiscard]] virtual Shape output_shape(const Shape& input) const = 0;

  virtual Tensor forward(const Tensor& input, Mode mode, Cache& cache) = 0;
  [[nodiscard]] virtual Gradients backward(const Cache& cache, const Tensor& upstream,
                                           bool want_param_grads = true) const = 0;

  virtual std::vector<Parameter*> parameters() { return {}; }
  [[nodiscard]] std::vector<const Parameter*> parameters() const;
  /// Non-trained state (BatchNorm running statistics).
  virtual std::vector<Parameter*> buffers() { return {}; }

  /// He-normal weights, zero biases.
  virtual void initialize(std::mt19937_64& /*rng*/) {}

  [[nodiscard]] virtual std::unique_ptr<Layer> clone() const = 0;

  [[nodiscard]] bool frozen() const { return frozen_; }
  virtual void set_frozen(bool frozen) { frozen_ = frozen; }

 protected:
  void begin(Cache& cache, Mode mode) const;
  void check_cache(const Cache& cache, std::size_t saved) const;

 private:
  bool frozen_ = false;
};

class Conv2D final : public Layer {
 public:
  Conv2D(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride = 1, std::size_t padding = 0);

  [[nodiscard]] LayerKind kind() const override { return LayerKind::Conv2D; }
  [[nodiscard]] std::string fingerprint() const override;
  [[nodiscard]] Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, Cache& cache) override;
  [[nodiscard]] Gradients backward(const Cache& cache, const Tensor& upstream,
                                   bool want_param_grads) const override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  void initialize(std::mt19937_64& rng) override;
  [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2D>(*this); }

  /// (out, in, k, k)
  Tensor& weight() { return weight_.value; }
  Tensor& bias() { return bias_.value; }

 private:
  std::size_t in_, out_, kernel_, stride_, padding_;
  Parameter weight_;
  Parameter bias_;
};

class Dense final : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t out_features);

  [[nodiscard]] LayerKind kind() const override { return LayerKind::Dense; }
  [[nodiscard]] std::string fingerprint() const override;
  [[nodiscard]] Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, Cache& cache) override;
  [[nodiscard]] Gradients backward(const Cache& cache, const Tensor& upstream,
                                   bool want_param_grads) const override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  void initialize(std::mt19937_64& rng) override;
  [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

  [[nodiscard]] std::size_t in_features() const { return in_; }
  [[nodiscard]] std::size_t out_features() const { return out_; }
  /// (out, in)
  Tensor& weight() { return weight_.value; }
  Tensor& bias() { return bias_.value; }

 private:
  std::size_t in_, out_;
  Parameter weight_;
  Parameter bias_;
};

class ReLU final : public Layer {
 public:
  [[nodiscard]] LayerKind kind() const override { return LayerKind::ReLU; }
  [[nodiscard]] std::string fingerprint() const override { return "relu"; }
  [[nodiscard]] Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input, Mode mode, Cache& cache) override;
  [[nodiscard]] Gradients backward(const Cache& cache, const Tensor& upstream,
                                   bool want_param_grads) const override;
  [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }
};

class MaxPool final : public Layer {
 public:
  MaxPool(std::size_t kernel, std::size_t stride);

  [[nodiscard]] LayerKind kind() const override { return LayerKind::MaxPool; }
  [[nodiscard]] std::string fingerprint() const override;
  [[nodiscard]] Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, Cache& cache) override;
  [[nodiscard]] Gradients backward(const Cache& cache, const Tensor& upstream,
                                   bool want_param_grads) const override;
  [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool>(*this); }

 private:
  std::size_t kernel_, stride_;
};

class Flatten final : public Layer {
 public:
  [[nodiscard]] LayerKind kind() const override { return LayerKind::Flatten; }
  [[nodiscard]] std::string fingerprint() const override { return "flatten"; }
  [[nodiscard]] Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, Cache& cache) override;
  [[nodiscard]] Gradients backward(const Cache& cache, const Tensor& upstream,
                                   bool want_param_grads) const override;
  [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }
};

/// Per-channel normalization over (N, C) or (N, C, H, W) inputs. Train mode
/// uses batch statistics and updates the running estimates; eval mode uses
/// the running estimates.
class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(std::size_t channels, double epsilon = 1e-5, double momentum = 0.1);

  [[nodiscard]] LayerKind kind() const override { return LayerKind::BatchNorm; }
  [[nodiscard]] std::string fingerprint() const override;
  [[nodiscard]] Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, Cache& cache) override;
  [[nodiscard]] Gradients backward(const Cache& cache, const Tensor& upstream,
                                   bool want_param_grads) const override;
  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Parameter*> buffers() override { return {&running_mean_, &running_var_}; }
  [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }

  Tensor& gamma() { return gamma_.value; }
  Tensor& beta() { return beta_.value; }
  Tensor& running_mean() { return running_mean_.value; }
  Tensor& running_var() { return running_var_.value; }

 private:
  std::size_t channels_;
  double epsilon_, momentum_;
  Parameter gamma_, beta_, running_mean_, running_var_;
};

enum class Shortcut { Identity, Projection };

/// y = F(x) + S(x) with F = conv3x3 -> BN -> ReLU -> conv3x3 -> BN and S the
/// identity or a strided 1x1 convolution. No activation after the sum.
class ResidualBlock final : public Layer {
 public:
  ResidualBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride = 1,
                Shortcut shortcut = Shortcut::Identity);
  ResidualBlock(const ResidualBlock& other);
  ResidualBlock& operator=(const ResidualBlock&) = delete;

  [[nodiscard]] LayerKind kind() const override { return LayerKind::ResidualBlock; }
  [[nodiscard]] std::string fingerprint() const override;
  [[nodiscard]] Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode, Cache& cache) override;
  [[nodiscard]] Gradients backward(const Cache& cache, const Tensor& upstream,
                                   bool want_param_grads) const override;
  std::vector<Parameter*> parameters() override;
  std::vector<Parameter*> buffers() override;
  void initialize(std::mt19937_64& rng) override;
  [[nodiscard]] std::unique_ptr<Layer> clone() const override {
    return std::make_unique<ResidualBlock>(*this);
  }
  void set_frozen(bool frozen) override;

  /// conv1, bn1, relu, conv2, bn2
  [[nodiscard]] const std::vector<std::unique_ptr<Layer>>& inner() const { return inner_; }
  std::vector<std::unique_ptr<Layer>>& inner() { return inner_; }
  /// Null for identity shortcuts.
  Layer* projection() { return projection_.get(); }

 private:
  std::size_t in_, out_, stride_;
  Shortcut shortcut_;
  std::vector<std::unique_ptr<Layer>> inner_;
  std::unique_ptr<Layer> projection_;
};

/// Ordered stack of layers with deep-copy semantics. Frozen layers always
/// run in eval mode.
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void push_back(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  [[nodiscard]] std::size_t size() const { return layers_.size(); }
  [[nodiscard]] bool empty() const { return layers_.empty(); }
  Layer& operator[](std::size_t i) { return *layers_[i]; }
  [[nodiscard]] const Layer& operator[](std::size_t i) const { return *layers_[i]; }

  [[nodiscard]] std::string fingerprint() const;
  [[nodiscard]] Shape output_shape(Shape input) const;

  Tensor forward(const Tensor& input, Mode mode, std::vector<Cache>& caches);
  /// Backpropagates through every layer. Parameter gradients are appended
  /// per layer (layer-major, aligned with parameters()); frozen layers get
  /// none when `skip_frozen_params` is set.
  Tensor backward(const std::vector<Cache>& caches, const Tensor& upstream,
                  std::vector<Tensor>* param_grads, bool skip_frozen_params = true) const;

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> buffers();
  void initialize(std::mt19937_64& rng);
  void set_frozen(bool frozen);
  [[nodiscard]] bool all_frozen() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace qtl::nn
