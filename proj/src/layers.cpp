#include "qtl/layers.hpp"

#include <cmath>
#include <limits>

#include "qtl/error.hpp"

namespace qtl::nn {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2D: return "Conv2D";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::MaxPool: return "MaxPool";
    case LayerKind::Dense: return "Dense";
    case LayerKind::BatchNorm: return "BatchNorm";
    case LayerKind::ResidualBlock: return "ResidualBlock";
    case LayerKind::Flatten: return "Flatten";
  }
  return "?";
}

namespace {

void he_normal(Tensor& t, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : t.data()) v = normal(rng);
}

[[noreturn]] void shape_mismatch(const std::string& layer, const Shape& got, const std::string& want) {
  throw ShapeError(layer + ": input shape " + to_string(got) + " incompatible with expected " + want);
}

std::vector<Tensor> empty_grads(std::size_t count) { return std::vector<Tensor>(count); }

}  // namespace

std::vector<const Parameter*> Layer::parameters() const {
  std::vector<const Parameter*> out;
  for (auto* p : const_cast<Layer*>(this)->parameters()) out.push_back(p);
  return out;
}

void Layer::begin(Cache& cache, Mode mode) const {
  cache.owner = this;
  cache.mode = mode;
  cache.saved.clear();
  cache.children.clear();
}

void Layer::check_cache(const Cache& cache, std::size_t saved) const {
  if (cache.owner != this || cache.saved.size() < saved) {
    throw UsageError(to_string(kind()) + ": backward called without a matching forward cache");
  }
}

// ---------------------------------------------------------------- Conv2D

Conv2D::Conv2D(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, std::size_t padding)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), padding_(padding),
      weight_{"weight", Tensor({out_channels, in_channels, kernel, kernel})},
      bias_{"bias", Tensor({out_channels})} {
  if (!in_ || !out_ || !kernel_ || !stride_) throw ConfigError("Conv2D sizes must be positive");
}

std::string Conv2D::fingerprint() const {
  return "conv(" + std::to_string(in_) + "->" + std::to_string(out_) + ",k" + std::to_string(kernel_) +
         ",s" + std::to_string(stride_) + ",p" + std::to_string(padding_) + ")";
}

Shape Conv2D::output_shape(const Shape& input) const {
  const std::string want = "(N, " + std::to_string(in_) + ", H, W)";
  if (input.size() != 4 || input[1] != in_) shape_mismatch("Conv2D", input, want);
  const std::size_t h = input[2] + 2 * padding_;
  const std::size_t w = input[3] + 2 * padding_;
  if (h < kernel_ || w < kernel_) shape_mismatch("Conv2D", input, "spatial size >= kernel");
  return {input[0], out_, (h - kernel_) / stride_ + 1, (w - kernel_) / stride_ + 1};
}

Tensor Conv2D::forward(const Tensor& input, Mode mode, Cache& cache) {
  const Shape os = output_shape(input.shape());
  begin(cache, mode);
  Tensor out(os);
  const std::size_t N = os[0], OH = os[2], OW = os[3], H = input.dim(2), W = input.dim(3);
  const auto x = input.data();
  const auto w = weight_.value.data();
  auto y = out.data();
  const auto pad = static_cast<std::ptrdiff_t>(padding_);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < out_; ++o) {
      for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
          double acc = bias_.value[o];
          for (std::size_t c = 0; c < in_; ++c) {
            for (std::size_t kh = 0; kh < kernel_; ++kh) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * stride_ + kh) - pad;
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t kw = 0; kw < kernel_; ++kw) {
                const auto iw = static_cast<std::ptrdiff_t>(ow * stride_ + kw) - pad;
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                acc += w[((o * in_ + c) * kernel_ + kh) * kernel_ + kw] *
                       x[((n * in_ + c) * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw)];
              }
            }
          }
          y[((n * out_ + o) * OH + oh) * OW + ow] = acc;
        }
      }
    }
  }
  cache.saved.push_back(input);
  return out;
}

Gradients Conv2D::backward(const Cache& cache, const Tensor& upstream, bool want_param_grads) const {
  check_cache(cache, 1);
  const Tensor& input = cache.saved[0];
  const Shape os = output_shape(input.shape());
  if (upstream.shape() != os) shape_mismatch("Conv2D backward", upstream.shape(), to_string(os));
  const std::size_t N = os[0], OH = os[2], OW = os[3], H = input.dim(2), W = input.dim(3);
  Gradients g{Tensor(input.shape()), {}};
  Tensor dw(weight_.value.shape());
  Tensor db(bias_.value.shape());
  const auto x = input.data();
  const auto w = weight_.value.data();
  const auto up = upstream.data();
  auto dx = g.input_grad.data();
  const auto pad = static_cast<std::ptrdiff_t>(padding_);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < out_; ++o) {
      for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
          const double gy = up[((n * out_ + o) * OH + oh) * OW + ow];
          if (gy == 0.0) continue;
          db[o] += gy;
          for (std::size_t c = 0; c < in_; ++c) {
            for (std::size_t kh = 0; kh < kernel_; ++kh) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * stride_ + kh) - pad;
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t kw = 0; kw < kernel_; ++kw) {
                const auto iw = static_cast<std::ptrdiff_t>(ow * stride_ + kw) - pad;
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                const std::size_t xi =
                    ((n * in_ + c) * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw);
                const std::size_t wi = ((o * in_ + c) * kernel_ + kh) * kernel_ + kw;
                dw[wi] += gy * x[xi];
                dx[xi] += gy * w[wi];
              }
            }
          }
        }
      }
    }
  }
  if (want_param_grads) g.param_grads = {std::move(dw), std::move(db)};
  return g;
}

void Conv2D::initialize(std::mt19937_64& rng) {
  he_normal(weight_.value, in_ * kernel_ * kernel_, rng);
  bias_.value.fill(0.0);
}

// ----------------------------------------------------------------- Dense

Dense::Dense(std::size_t in_features, std::size_t out_features)
    : in_(in_features), out_(out_features),
      weight_{"weight", Tensor({out_features, in_features})},
      bias_{"bias", Tensor({out_features})} {
  if (!in_ || !out_) throw ConfigError("Dense sizes must be positive");
}

std::string Dense::fingerprint() const {
  return "dense(" + std::to_string(in_) + "->" + std::to_string(out_) + ")";
}

Shape Dense::output_shape(const Shape& input) const {
  if (input.size() != 2 || input[1] != in_) {
    shape_mismatch("Dense", input, "(N, " + std::to_string(in_) + ")");
  }
  return {input[0], out_};
}

Tensor Dense::forward(const Tensor& input, Mode mode, Cache& cache) {
  const Shape os = output_shape(input.shape());
  begin(cache, mode);
  Tensor out(os);
  const auto w = weight_.value.data();
  for (std::size_t n = 0; n < os[0]; ++n) {
    const auto x = input.row(n);
    auto y = out.row(n);
    for (std::size_t o = 0; o < out_; ++o) {
      double acc = bias_.value[o];
      const std::size_t base = o * in_;
      for (std::size_t i = 0; i < in_; ++i) acc += w[base + i] * x[i];
      y[o] = acc;
    }
  }
  cache.saved.push_back(input);
  return out;
}

Gradients Dense::backward(const Cache& cache, const Tensor& upstream, bool want_param_grads) const {
  check_cache(cache, 1);
  const Tensor& input = cache.saved[0];
  const Shape os = output_shape(input.shape());
  if (upstream.shape() != os) shape_mismatch("Dense backward", upstream.shape(), to_string(os));
  Gradients g{Tensor(input.shape()), {}};
  Tensor dw(weight_.value.shape());
  Tensor db(bias_.value.shape());
  const auto w = weight_.value.data();
  for (std::size_t n = 0; n < os[0]; ++n) {
    const auto x = input.row(n);
    const auto up = upstream.row(n);
    auto dx = g.input_grad.row(n);
    for (std::size_t o = 0; o < out_; ++o) {
      const double gy = up[o];
      if (gy == 0.0) continue;
      db[o] += gy;
      const std::size_t base = o * in_;
      for (std::size_t i = 0; i < in_; ++i) {
        dw[base + i] += gy * x[i];
        dx[i] += gy * w[base + i];
      }
    }
  }
  if (want_param_grads) g.param_grads = {std::move(dw), std::move(db)};
  return g;
}

void Dense::initialize(std::mt19937_64& rng) {
  he_normal(weight_.value, in_, rng);
  bias_.value.fill(0.0);
}

// ------------------------------------------------------------------ ReLU

Tensor ReLU::forward(const Tensor& input, Mode mode, Cache& cache) {
  begin(cache, mode);
  Tensor out = input;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  cache.saved.push_back(input);
  return out;
}

Gradients ReLU::backward(const Cache& cache, const Tensor& upstream, bool /*want_param_grads*/) const {
  check_cache(cache, 1);
  const Tensor& input = cache.saved[0];
  if (upstream.shape() != input.shape()) shape_mismatch("ReLU backward", upstream.shape(), to_string(input.shape()));
  Gradients g{upstream, {}};
  auto dx = g.input_grad.data();
  const auto x = input.data();
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(x[i] > 0.0)) dx[i] = 0.0;
  }
  return g;
}

// --------------------------------------------------------------- MaxPool

MaxPool::MaxPool(std::size_t kernel, std::size_t stride) : kernel_(kernel), stride_(stride) {
  if (!kernel_ || !stride_) throw ConfigError("MaxPool sizes must be positive");
}

std::string MaxPool::fingerprint() const {
  return "maxpool(k" + std::to_string(kernel_) + ",s" + std::to_string(stride_) + ")";
}

Shape MaxPool::output_shape(const Shape& input) const {
  if (input.size() != 4 || input[2] < kernel_ || input[3] < kernel_) {
    shape_mismatch("MaxPool", input, "(N, C, H>=k, W>=k)");
  }
  return {input[0], input[1], (input[2] - kernel_) / stride_ + 1, (input[3] - kernel_) / stride_ + 1};
}

Tensor MaxPool::forward(const Tensor& input, Mode mode, Cache& cache) {
  const Shape os = output_shape(input.shape());
  begin(cache, mode);
  Tensor out(os);
  Tensor argmax(os);
  const std::size_t planes = os[0] * os[1], OH = os[2], OW = os[3], H = input.dim(2), W = input.dim(3);
  const auto x = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oh = 0; oh < OH; ++oh) {
      for (std::size_t ow = 0; ow < OW; ++ow) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = p * H * W + oh * stride_ * W + ow * stride_;
        for (std::size_t kh = 0; kh < kernel_; ++kh) {
          for (std::size_t kw = 0; kw < kernel_; ++kw) {
            const std::size_t i = p * H * W + (oh * stride_ + kh) * W + ow * stride_ + kw;
            if (x[i] > best) {
              best = x[i];
              best_i = i;
            }
          }
        }
        const std::size_t o = (p * OH + oh) * OW + ow;
        out[o] = best;
        argmax[o] = static_cast<double>(best_i);
      }
    }
  }
  cache.saved.push_back(Tensor(input.shape()));  // shape carrier for the input gradient
  cache.saved.push_back(std::move(argmax));
  return out;
}

Gradients MaxPool::backward(const Cache& cache, const Tensor& upstream, bool /*want_param_grads*/) const {
  check_cache(cache, 2);
  const Tensor& argmax = cache.saved[1];
  if (upstream.shape() != argmax.shape()) shape_mismatch("MaxPool backward", upstream.shape(), to_string(argmax.shape()));
  Gradients g{Tensor(cache.saved[0].shape()), {}};
  for (std::size_t o = 0; o < upstream.size(); ++o) {
    g.input_grad[static_cast<std::size_t>(argmax[o])] += upstream[o];
  }
  return g;
}

// --------------------------------------------------------------- Flatten

Shape Flatten::output_shape(const Shape& input) const {
  if (input.size() < 2) shape_mismatch("Flatten", input, "(N, ...)");
  return {input[0], shape_size(input) / input[0]};
}

Tensor Flatten::forward(const Tensor& input, Mode mode, Cache& cache) {
  const Shape os = output_shape(input.shape());
  begin(cache, mode);
  cache.saved.push_back(Tensor(input.shape()));
  return input.reshaped(os);
}

Gradients Flatten::backward(const Cache& cache, const Tensor& upstream, bool /*want_param_grads*/) const {
  check_cache(cache, 1);
  return {upstream.reshaped(cache.saved[0].shape()), {}};
}

// ------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::size_t channels, double epsilon, double momentum)
    : channels_(channels), epsilon_(epsilon), momentum_(momentum),
      gamma_{"gamma", Tensor({channels}, 1.0)}, beta_{"beta", Tensor({channels}, 0.0)},
      running_mean_{"running_mean", Tensor({channels}, 0.0)},
      running_var_{"running_var", Tensor({channels}, 1.0)} {
  if (!channels_) throw ConfigError("BatchNorm needs at least one channel");
}

std::string BatchNorm::fingerprint() const { return "bn(" + std::to_string(channels_) + ")"; }

Shape BatchNorm::output_shape(const Shape& input) const {
  if ((input.size() != 2 && input.size() != 4) || input[1] != channels_) {
    shape_mismatch("BatchNorm", input, "(N, " + std::to_string(channels_) + "[, H, W])");
  }
  return input;
}

Tensor BatchNorm::forward(const Tensor& input, Mode mode, Cache& cache) {
  (void)output_shape(input.shape());  // validates
  begin(cache, mode);
  const std::size_t N = input.dim(0), C = channels_;
  const std::size_t S = input.size() / (N * C);
  const auto m = static_cast<double>(N * S);
  const auto x = input.data();
  Tensor xhat(input.shape());
  Tensor inv_std({C});
  Tensor out(input.shape());
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (mode == Mode::Train) {
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t s = 0; s < S; ++s) mean += x[(n * C + c) * S + s];
      mean /= m;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t s = 0; s < S; ++s) {
          const double d = x[(n * C + c) * S + s] - mean;
          var += d * d;
        }
      var /= m;
      running_mean_.value[c] = (1.0 - momentum_) * running_mean_.value[c] + momentum_ * mean;
      const double unbiased = m > 1.0 ? var * m / (m - 1.0) : var;
      running_var_.value[c] = (1.0 - momentum_) * running_var_.value[c] + momentum_ * unbiased;
    } else {
      mean = running_mean_.value[c];
      var = running_var_.value[c];
    }
    const double is = 1.0 / std::sqrt(var + epsilon_);
    inv_std[c] = is;
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t i = (n * C + c) * S + s;
        xhat[i] = (x[i] - mean) * is;
        out[i] = gamma_.value[c] * xhat[i] + beta_.value[c];
      }
    }
  }
  cache.saved.push_back(std::move(xhat));
  cache.saved.push_back(std::move(inv_std));
  return out;
}

Gradients BatchNorm::backward(const Cache& cache, const Tensor& upstream, bool want_param_grads) const {
  check_cache(cache, 2);
  const Tensor& xhat = cache.saved[0];
  const Tensor& inv_std = cache.saved[1];
  if (upstream.shape() != xhat.shape()) shape_mismatch("BatchNorm backward", upstream.shape(), to_string(xhat.shape()));
  const std::size_t N = xhat.dim(0), C = channels_;
  const std::size_t S = xhat.size() / (N * C);
  const auto m = static_cast<double>(N * S);
  Gradients g{Tensor(xhat.shape()), {}};
  Tensor dgamma({C});
  Tensor dbeta({C});
  for (std::size_t c = 0; c < C; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t i = (n * C + c) * S + s;
        sum_dy += upstream[i];
        sum_dy_xhat += upstream[i] * xhat[i];
      }
    dgamma[c] = sum_dy_xhat;
    dbeta[c] = sum_dy;
    const double gam = gamma_.value[c];
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t i = (n * C + c) * S + s;
        if (cache.mode == Mode::Train) {
          g.input_grad[i] = gam * inv_std[c] / m * (m * upstream[i] - sum_dy - xhat[i] * sum_dy_xhat);
        } else {
          g.input_grad[i] = gam * inv_std[c] * upstream[i];
        }
      }
  }
  if (want_param_grads) g.param_grads = {std::move(dgamma), std::move(dbeta)};
  return g;
}

// --------------------------------------------------------- ResidualBlock

ResidualBlock::ResidualBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride,
                             Shortcut shortcut)
    : in_(in_channels), out_(out_channels), stride_(stride), shortcut_(shortcut) {
  if (shortcut == Shortcut::Identity && (in_ != out_ || stride_ != 1)) {
    throw ShapeError("residual block " + std::to_string(in_) + "->" + std::to_string(out_) + " stride " +
                     std::to_string(stride_) + " needs a projection shortcut");
  }
  inner_.push_back(std::make_unique<Conv2D>(in_, out_, 3, stride_, 1));
  inner_.push_back(std::make_unique<BatchNorm>(out_));
  inner_.push_back(std::make_unique<ReLU>());
  inner_.push_back(std::make_unique<Conv2D>(out_, out_, 3, 1, 1));
  inner_.push_back(std::make_unique<BatchNorm>(out_));
  if (shortcut == Shortcut::Projection) projection_ = std::make_unique<Conv2D>(in_, out_, 1, stride_, 0);
}

ResidualBlock::ResidualBlock(const ResidualBlock& other)
    : Layer(other), in_(other.in_), out_(other.out_), stride_(other.stride_), shortcut_(other.shortcut_) {
  for (const auto& l : other.inner_) inner_.push_back(l->clone());
  if (other.projection_) projection_ = other.projection_->clone();
}

std::string ResidualBlock::fingerprint() const {
  std::string s = "res(" + std::to_string(in_) + "->" + std::to_string(out_) + ",s" + std::to_string(stride_) +
                  (projection_ ? ",proj" : ",id") + ")[";
  for (const auto& l : inner_) s += l->fingerprint() + ";";
  return s + "]";
}

Shape ResidualBlock::output_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& l : inner_) s = l->output_shape(s);
  const Shape shortcut = projection_ ? projection_->output_shape(input) : input;
  if (s != shortcut) {
    throw ShapeError("residual block: inner path " + to_string(s) + " vs shortcut " + to_string(shortcut));
  }
  return s;
}

Tensor ResidualBlock::forward(const Tensor& input, Mode mode, Cache& cache) {
  (void)output_shape(input.shape());  // validates
  begin(cache, mode);
  cache.children.resize(inner_.size() + (projection_ ? 1 : 0));
  Tensor h = input;
  for (std::size_t i = 0; i < inner_.size(); ++i) h = inner_[i]->forward(h, mode, cache.children[i]);
  const Tensor s = projection_ ? projection_->forward(input, mode, cache.children.back()) : input;
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += s[i];
  cache.saved.push_back(Tensor(input.shape()));
  return h;
}

Gradients ResidualBlock::backward(const Cache& cache, const Tensor& upstream, bool want_param_grads) const {
  check_cache(cache, 1);
  if (cache.children.size() != inner_.size() + (projection_ ? 1 : 0)) {
    throw UsageError("ResidualBlock: cache does not match block layout");
  }
  Gradients g;
  std::vector<std::vector<Tensor>> per_layer(inner_.size());
  Tensor h = upstream;
  for (std::size_t i = inner_.size(); i-- > 0;) {
    auto r = inner_[i]->backward(cache.children[i], h, want_param_grads);
    h = std::move(r.input_grad);
    per_layer[i] = std::move(r.param_grads);
  }
  std::vector<Tensor> proj_grads;
  if (projection_) {
    auto r = projection_->backward(cache.children.back(), upstream, want_param_grads);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += r.input_grad[i];
    proj_grads = std::move(r.param_grads);
  } else {
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += upstream[i];
  }
  g.input_grad = std::move(h);
  if (want_param_grads) {
    for (auto& v : per_layer)
      for (auto& t : v) g.param_grads.push_back(std::move(t));
    for (auto& t : proj_grads) g.param_grads.push_back(std::move(t));
  }
  return g;
}

std::vector<Parameter*> ResidualBlock::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : inner_)
    for (auto* p : l->parameters()) out.push_back(p);
  if (projection_)
    for (auto* p : projection_->parameters()) out.push_back(p);
  return out;
}

std::vector<Parameter*> ResidualBlock::buffers() {
  std::vector<Parameter*> out;
  for (auto& l : inner_)
    for (auto* p : l->buffers()) out.push_back(p);
  return out;
}

void ResidualBlock::initialize(std::mt19937_64& rng) {
  for (auto& l : inner_) l->initialize(rng);
  if (projection_) projection_->initialize(rng);
}

void ResidualBlock::set_frozen(bool frozen) {
  Layer::set_frozen(frozen);
  for (auto& l : inner_) l->set_frozen(frozen);
  if (projection_) projection_->set_frozen(frozen);
}

// ------------------------------------------------------------ Sequential

Sequential::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::string Sequential::fingerprint() const {
  std::string s;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (i) s += "|";
    s += layers_[i]->fingerprint();
  }
  return s;
}

Shape Sequential::output_shape(Shape input) const {
  for (const auto& l : layers_) input = l->output_shape(input);
  return input;
}

Tensor Sequential::forward(const Tensor& input, Mode mode, std::vector<Cache>& caches) {
  caches.resize(layers_.size());
  Tensor h = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Mode m = layers_[i]->frozen() ? Mode::Eval : mode;
    h = layers_[i]->forward(h, m, caches[i]);
  }
  return h;
}

Tensor Sequential::backward(const std::vector<Cache>& caches, const Tensor& upstream,
                            std::vector<Tensor>* param_grads, bool skip_frozen_params) const {
  if (caches.size() != layers_.size()) throw UsageError("Sequential: backward without matching forward");
  std::vector<std::vector<Tensor>> per_layer(layers_.size());
  Tensor h = upstream;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool want = param_grads != nullptr && !(skip_frozen_params && layers_[i]->frozen());
    auto r = layers_[i]->backward(caches[i], h, want);
    h = std::move(r.input_grad);
    if (want) {
      per_layer[i] = std::move(r.param_grads);
    } else {
      per_layer[i] = empty_grads(layers_[i]->parameters().size());
    }
  }
  if (param_grads) {
    for (auto& v : per_layer)
      for (auto& t : v) param_grads->push_back(std::move(t));
  }
  return h;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_)
    for (auto* p : l->parameters()) out.push_back(p);
  return out;
}

std::vector<Parameter*> Sequential::buffers() {
  std::vector<Parameter*> out;
  for (auto& l : layers_)
    for (auto* p : l->buffers()) out.push_back(p);
  return out;
}

void Sequential::initialize(std::mt19937_64& rng) {
  for (auto& l : layers_) l->initialize(rng);
}

void Sequential::set_frozen(bool frozen) {
  for (auto& l : layers_) l->set_frozen(frozen);
}

bool Sequential::all_frozen() const {
  for (const auto& l : layers_)
    if (!l->frozen()) return false;
  return true;
}

}  // namespace qtl::nn
