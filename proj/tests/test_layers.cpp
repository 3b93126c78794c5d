#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "doctest.h"
#include "qtl/check.hpp"
#include "qtl/error.hpp"
#include "qtl/layers.hpp"
#include "qtl/loss.hpp"

using namespace qtl;
using namespace qtl::nn;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> d(0.0, 1.0);
  for (double& v : t.data()) v = d(rng);
  return t;
}

void randomize_params(Layer& layer, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 0.5);
  for (auto* p : layer.parameters()) {
    for (double& v : p->value.data()) v = d(rng);
  }
}

void check_grads(Layer& layer, const Tensor& x, Mode mode, std::uint64_t seed) {
  const auto r = check::check_layer_gradients(layer, x, mode, 1e-5, seed);
  INFO(to_string(layer.kind()), " input err ", r.input_error);
  CHECK(r.input_error <= 1e-4);
  for (std::size_t k = 0; k < r.param_errors.size(); ++k) {
    INFO("param ", k, " err ", r.param_errors[k]);
    CHECK(r.param_errors[k] <= 1e-4);
  }
}

}  // namespace

TEST_CASE("ReLU forward") {
  ReLU relu;
  Cache c;
  const Tensor out = relu.forward(Tensor({1, 3}, {-1, 0, 2}), Mode::Train, c);
  CHECK(out.vector() == std::vector<double>{0, 0, 2});
}

TEST_CASE("1x1 identity convolution") {
  std::mt19937_64 rng(1);
  Conv2D conv(3, 3, 1);
  conv.weight().fill(0.0);
  for (std::size_t c = 0; c < 3; ++c) conv.weight()[c * 3 + c] = 1.0;
  const Tensor x = random_tensor({2, 3, 4, 5}, rng);
  Cache cache;
  CHECK(conv.forward(x, Mode::Train, cache) == x);
}

TEST_CASE("convolution matches a direct loop") {
  std::mt19937_64 rng(2);
  Conv2D conv(2, 3, 3, 2, 1);
  randomize_params(conv, rng);
  const Tensor x = random_tensor({2, 2, 5, 6}, rng);
  Cache cache;
  const Tensor y = conv.forward(x, Mode::Eval, cache);
  REQUIRE(y.shape() == Shape{2, 3, 3, 3});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 3; ++o)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
          double s = conv.bias()[o];
          for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t ki = 0; ki < 3; ++ki)
              for (std::size_t kj = 0; kj < 3; ++kj) {
                const long r = static_cast<long>(i * 2 + ki) - 1, q = static_cast<long>(j * 2 + kj) - 1;
                if (r < 0 || q < 0 || r >= 5 || q >= 6) continue;
                s += conv.weight()[((o * 2 + c) * 3 + ki) * 3 + kj] *
                     x[((n * 2 + c) * 5 + static_cast<std::size_t>(r)) * 6 + static_cast<std::size_t>(q)];
              }
          CHECK(std::abs(y[((n * 3 + o) * 3 + i) * 3 + j] - s) < 1e-12);
        }
}

TEST_CASE("3x3 max pool, stride 1, against a window scan") {
  const std::vector<double> grid{3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8, 9, 7, 9, 3};
  MaxPool pool(3, 1);
  Cache c;
  const Tensor y = pool.forward(Tensor({1, 1, 4, 4}, grid), Mode::Eval, c);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) m = std::max(m, grid[(i + a) * 4 + j + b]);
      CHECK(y[i * 2 + j] == m);
    }
}

TEST_CASE("shape errors name both shapes") {
  Dense d(4, 2);
  Cache c;
  try {
    (void)d.forward(Tensor({3, 5}), Mode::Train, c);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(3, 5)") != std::string::npos);
    CHECK(msg.find('4') != std::string::npos);
  }
  Conv2D conv(3, 4, 3);
  CHECK_THROWS_AS((void)conv.forward(Tensor({1, 2, 5, 5}), Mode::Train, c), ShapeError);
}

TEST_CASE("backward needs the matching cache") {
  Dense d(2, 2), other(2, 2);
  Cache empty;
  CHECK_THROWS_AS((void)d.backward(empty, Tensor({1, 2}), true), UsageError);
  Cache c;
  (void)other.forward(Tensor({1, 2}), Mode::Train, c);
  CHECK_THROWS_AS((void)d.backward(c, Tensor({1, 2}), true), UsageError);
}

TEST_CASE("residual block") {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({2, 4, 6, 6}, rng);

  SUBCASE("zero residual path leaves the input") {
    ResidualBlock block(4, 4);
    for (auto* p : block.parameters()) {
      if (p->name == "weight" || p->name == "bias") p->value.fill(0.0);
    }
    Cache c;
    CHECK(block.forward(x, Mode::Train, c) == x);
  }

  SUBCASE("matches the composed layers") {
    for (auto shortcut : {Shortcut::Identity, Shortcut::Projection}) {
      const std::size_t out = shortcut == Shortcut::Identity ? 4 : 6;
      const std::size_t stride = shortcut == Shortcut::Identity ? 1 : 2;
      ResidualBlock block(4, out, stride, shortcut);
      block.initialize(rng);
      randomize_params(block, rng);
      Cache c;
      const Tensor y = block.forward(x, Mode::Train, c);

      Tensor h = x;
      Cache scratch;
      for (auto& layer : block.inner()) h = layer->clone()->forward(h, Mode::Train, scratch);
      const Tensor s = block.projection() ? block.projection()->clone()->forward(x, Mode::Train, scratch) : x;
      REQUIRE(h.shape() == y.shape());
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(h[i] + s[i]).epsilon(1e-12));
    }
  }

  SUBCASE("identity shortcut needs matching shapes") {
    CHECK_THROWS_AS(ResidualBlock(4, 8), ShapeError);
    CHECK_THROWS_AS(ResidualBlock(4, 4, 2), ShapeError);
    CHECK_NOTHROW(ResidualBlock(4, 8, 2, Shortcut::Projection));
  }
}

TEST_CASE("gradient checks for every layer kind") {
  std::mt19937_64 rng(7);
  SUBCASE("dense") {
    Dense d(5, 3);
    randomize_params(d, rng);
    check_grads(d, random_tensor({4, 5}, rng), Mode::Train, 1);
  }
  SUBCASE("conv") {
    Conv2D c(2, 3, 3, 2, 1);
    randomize_params(c, rng);
    check_grads(c, random_tensor({2, 2, 5, 5}, rng), Mode::Train, 2);
    Conv2D plain(1, 2, 2);
    randomize_params(plain, rng);
    check_grads(plain, random_tensor({1, 1, 4, 3}, rng), Mode::Train, 3);
  }
  SUBCASE("relu") {
    ReLU r;
    check_grads(r, random_tensor({3, 7}, rng), Mode::Train, 4);
  }
  SUBCASE("max pool") {
    MaxPool p(2, 2);
    check_grads(p, random_tensor({2, 2, 4, 4}, rng), Mode::Train, 5);
    MaxPool overlap(3, 1);
    check_grads(overlap, random_tensor({1, 1, 5, 5}, rng), Mode::Train, 6);
  }
  SUBCASE("flatten") {
    Flatten f;
    check_grads(f, random_tensor({2, 3, 2, 2}, rng), Mode::Train, 7);
  }
  SUBCASE("batch norm, train and eval") {
    BatchNorm bn(3);
    randomize_params(bn, rng);
    check_grads(bn, random_tensor({4, 3, 2, 2}, rng), Mode::Train, 8);
    check_grads(bn, random_tensor({5, 3}, rng), Mode::Train, 9);
    for (double& v : bn.running_var().data()) v = 0.5 + std::abs(v);
    check_grads(bn, random_tensor({4, 3, 2, 2}, rng), Mode::Eval, 10);
  }
  SUBCASE("residual block") {
    ResidualBlock id(2, 2);
    id.initialize(rng);
    randomize_params(id, rng);
    check_grads(id, random_tensor({3, 2, 4, 4}, rng), Mode::Train, 11);
    ResidualBlock proj(2, 3, 2, Shortcut::Projection);
    proj.initialize(rng);
    randomize_params(proj, rng);
    check_grads(proj, random_tensor({3, 2, 4, 4}, rng), Mode::Train, 12);
  }
}

TEST_CASE("zero upstream gives zero gradients") {
  std::mt19937_64 rng(8);
  ResidualBlock block(2, 3, 1, Shortcut::Projection);
  block.initialize(rng);
  Cache c;
  const Tensor y = block.forward(random_tensor({2, 2, 4, 4}, rng), Mode::Train, c);
  const auto g = block.backward(c, Tensor(y.shape()), true);
  for (double v : g.input_grad.data()) CHECK(v == 0.0);
  for (const auto& p : g.param_grads)
    for (double v : p.data()) CHECK(v == 0.0);
}

TEST_CASE("batch norm running statistics") {
  BatchNorm bn(1);
  Cache c;
  const Tensor x({4, 1}, {1, 2, 3, 4});
  (void)bn.forward(x, Mode::Train, c);
  // mean 2.5, unbiased variance 5/3
  CHECK(bn.running_mean()[0] == doctest::Approx(0.25));
  CHECK(bn.running_var()[0] == doctest::Approx(0.9 + 0.1 * 5.0 / 3.0));
  const Tensor before = bn.running_mean();
  (void)bn.forward(x, Mode::Eval, c);
  CHECK(bn.running_mean() == before);
}

TEST_CASE("sequential runs frozen layers in eval mode") {
  Sequential seq;
  seq.add<BatchNorm>(2);
  seq.add<Dense>(2, 2);
  seq[0].set_frozen(true);
  std::vector<Cache> caches;
  const Tensor x({3, 2}, {1, 2, 3, 4, 5, 7});
  (void)seq.forward(x, Mode::Train, caches);
  auto& bn = static_cast<BatchNorm&>(seq[0]);
  CHECK(bn.running_mean()[0] == 0.0);
  std::vector<Tensor> grads;
  (void)seq.backward(caches, Tensor({3, 2}, 1.0), &grads);
  REQUIRE(grads.size() == 4);
  CHECK(grads[0].empty());
  CHECK(grads[1].empty());
  CHECK(!grads[2].empty());
}

TEST_CASE("sequential copies are deep") {
  std::mt19937_64 rng(9);
  Sequential a;
  a.add<Dense>(3, 2);
  a.add<ResidualBlock>(1, 1);
  a.initialize(rng);
  Sequential b = a;
  a.parameters()[0]->value[0] += 1.0;
  CHECK(a.parameters()[0]->value != b.parameters()[0]->value);
  CHECK(a.fingerprint() == b.fingerprint());
}

TEST_CASE("softmax") {
  const Tensor half = softmax(Tensor({1, 2}, {0, 0}));
  CHECK(half[0] == 0.5);
  CHECK(half[1] == 0.5);
  const Tensor big = softmax(Tensor({1, 2}, {1000, 0}));
  CHECK(big.all_finite());
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] < 1e-300);

  std::mt19937_64 rng(10);
  const Tensor x = random_tensor({20, 7}, rng);
  const Tensor p = softmax(x);
  Tensor shifted = x;
  for (double& v : shifted.data()) v += 3.25;
  const Tensor q = softmax(shifted);
  for (std::size_t i = 0; i < 20; ++i) {
    double s = 0.0;
    for (double v : p.row(i)) {
      CHECK(v > 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
  CHECK(check::max_abs_diff(p.data(), q.data()) <= 1e-12);
}

TEST_CASE("cross entropy") {
  const std::vector<double> sure{0.0, 1.0};
  CHECK(cross_entropy(sure, 1) == 0.0);
  const std::vector<double> coin{0.5, 0.5};
  CHECK(std::abs(cross_entropy(coin, 1) - std::log(2.0)) <= 1e-12);
  CHECK(cross_entropy(sure, 0) == doctest::Approx(-std::log(1e-12)));
  CHECK(std::isfinite(cross_entropy(sure, 0)));
  CHECK_THROWS_AS(cross_entropy(coin, 2), UsageError);
}

TEST_CASE("softmax cross-entropy gradient") {
  std::mt19937_64 rng(12);
  const Tensor logits = random_tensor({4, 3}, rng);
  const std::vector<std::size_t> labels{0, 2, 1, 2};
  const auto lg = softmax_cross_entropy(logits, labels);
  CHECK(lg.mean_loss > 0.0);
  const auto fd = check::central_difference(
      [&](std::span<const double> z) {
        return softmax_cross_entropy(Tensor({4, 3}, std::vector<double>(z.begin(), z.end())), labels).mean_loss;
      },
      logits.data(), 1e-5);
  CHECK(check::relative_error(lg.logits_grad.data(), fd) <= 1e-6);
}

TEST_CASE("argmax ties go to the lowest index") {
  const std::vector<double> v{1.0, 3.0, 3.0};
  CHECK(argmax(v) == 1);
  const std::vector<double> flat{0.0, 0.0};
  CHECK(argmax(flat) == 0);
}
