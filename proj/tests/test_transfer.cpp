#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "qtl/check.hpp"
#include "qtl/error.hpp"
#include "qtl/loss.hpp"
#include "qtl/model.hpp"

using namespace qtl;
using namespace qtl::transfer;
namespace fs = std::filesystem;

namespace {

// Small image model that keeps gradient checks quick.
ModelSpec tiny_spec() {
  ModelSpec s;
  s.sample_shape = {1, 8, 8};
  s.classes = 3;
  s.conv_channels = 2;
  s.hidden_width = 5;
  s.n_qubits = 3;
  s.depth = 2;
  s.init_spread = 0.5;
  return s;
}

Tensor random_batch(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : t.data()) v = u(rng);
  return t;
}

std::vector<Tensor> extractor_state(Model& m) {
  std::vector<Tensor> out;
  for (auto* p : m.extractor.parameters()) out.push_back(p->value);
  for (auto* b : m.extractor.buffers()) out.push_back(b->value);
  return out;
}

Checkpoint tiny_checkpoint(std::uint64_t seed) {
  Model src = build_source_model(tiny_spec(), 4, seed);
  return extractor_checkpoint(src, seed, "pretrain");
}

}  // namespace

TEST_CASE("regime names") {
  for (auto r : {Regime::ClassicalTL, Regime::ClassicalNoTL, Regime::QuantumTL, Regime::QuantumNoTL}) {
    CHECK(parse_regime(to_string(r)) == r);
  }
  CHECK(to_string(Regime::QuantumTL) == "quantum_tl");
  CHECK_THROWS_AS(parse_regime("hybrid"), ConfigError);
  CHECK(uses_transfer(Regime::ClassicalTL));
  CHECK(!uses_transfer(Regime::QuantumNoTL));
  CHECK(uses_quantum(Regime::QuantumNoTL));
}

TEST_CASE("build") {
  ModelSpec spec;
  Model src = build_source_model(spec, 6, 1);
  const Checkpoint ckpt = extractor_checkpoint(src, 1, "pretrain");

  Model qtl_model = build(Regime::QuantumTL, spec, ckpt, 2);
  CHECK(qtl_model.quantum_parameter_count() == 108);
  CHECK(qtl_model.extractor.all_frozen());
  CHECK(qtl_model.frozen_layer_count() == qtl_model.extractor.size());

  Model notl = build(Regime::QuantumNoTL, spec, std::nullopt, 2);
  CHECK(notl.frozen_layer_count() == 0);
  CHECK(notl.quantum_parameter_count() == 108);

  CHECK_THROWS_AS(build(Regime::ClassicalTL, spec, std::nullopt, 2), ConfigError);
  CHECK_THROWS_AS(build(Regime::QuantumTL, spec, std::nullopt, 2), ConfigError);
  CHECK_THROWS_AS(build(Regime::ClassicalNoTL, spec, ckpt, 2), ConfigError);

  ModelSpec fixed = spec;
  fixed.fixed_readout = true;
  Model f = build(Regime::QuantumNoTL, fixed, std::nullopt, 2);
  CHECK(f.readout.all_frozen());
  CHECK(f.frozen_layer_count() == 1);

  Model c = build(Regime::ClassicalTL, spec, ckpt, 3);
  CHECK(!c.is_quantum());
  CHECK(c.quantum_parameter_count() == 0);
}

TEST_CASE("feature-vector inputs skip the extractor") {
  ModelSpec spec;
  spec.input_kind = data::DatasetKind::FeatureVector;
  spec.sample_shape = {512};
  Model m = build(Regime::QuantumTL, spec, std::nullopt, 1);
  CHECK(m.extractor.empty());
  CHECK(m.reduction.output_shape({4, 512}) == Shape{4, 6});
  CHECK_THROWS_AS(build(Regime::QuantumTL, spec, tiny_checkpoint(1), 1), ConfigError);
  std::mt19937_64 rng(1);
  CHECK(m.logits(random_batch({2, 512}, rng)).shape() == Shape{2, 2});
}

TEST_CASE("end-to-end gradients match finite differences") {
  std::mt19937_64 rng(5);
  const std::vector<std::size_t> labels{0, 2};
  for (auto regime : {Regime::QuantumNoTL, Regime::ClassicalNoTL}) {
    Model m = build(regime, tiny_spec(), std::nullopt, 7);
    const Tensor x = random_batch({2, 1, 8, 8}, rng);
    auto loss_at = [&](const Tensor& in) {
      Model::Cache c;
      return nn::softmax_cross_entropy(m.forward(in, nn::Mode::Train, c), labels).mean_loss;
    };
    Model::Cache cache;
    const auto lg = nn::softmax_cross_entropy(m.forward(x, nn::Mode::Train, cache), labels);
    const auto g = m.backward(cache, lg.logits_grad, true, true);

    const auto fd_x = check::central_difference(
        [&](std::span<const double> v) { return loss_at(Tensor(x.shape(), std::vector<double>(v.begin(), v.end()))); },
        x.data(), 1e-5);
    CHECK(check::relative_error(g.input.data(), fd_x) <= 1e-4);

    auto slots = m.slots(g);
    for (auto& s : slots) {
      std::vector<double> original(s.value.begin(), s.value.end());
      const auto fd = check::central_difference(
          [&](std::span<const double> v) {
            std::copy(v.begin(), v.end(), s.value.begin());
            return loss_at(x);
          },
          original, 1e-5);
      std::copy(original.begin(), original.end(), s.value.begin());
      CHECK(check::relative_error(s.grad, fd) <= 1e-4);
    }
  }
}

TEST_CASE("one step lowers the loss on a single sample") {
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    Model m = build(Regime::QuantumNoTL, tiny_spec(), std::nullopt, seed);
    const Tensor x = random_batch({1, 1, 8, 8}, rng);
    const std::vector<std::size_t> y{seed % 3};
    Model::Cache cache;
    const auto before = nn::softmax_cross_entropy(m.forward(x, nn::Mode::Train, cache), y);
    const auto g = m.backward(cache, before.logits_grad, true, false);
    nn::Optimizer opt({nn::OptimizerKind::SGD, 1e-3, nn::LrSchedule::Constant});
    opt.step(m.slots(g), 1e-3);
    const auto after = nn::softmax_cross_entropy(m.forward(x, nn::Mode::Train, cache), y);
    improved += after.mean_loss < before.mean_loss ? 1 : 0;
  }
  CHECK(improved >= 18);
}

TEST_CASE("freeze") {
  const auto ds = data::synth_generate({3, 8, 8, 1, 0.3, data::SynthTask::Target});
  Model m = build(Regime::QuantumTL, tiny_spec(), tiny_checkpoint(3), 4);
  const auto ext_before = extractor_state(m);
  const std::vector<double> head_before(std::get<QuantumHead>(m.head).params.angles().begin(),
                                        std::get<QuantumHead>(m.head).params.angles().end());
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.optimizer.lr = 0.01;
  (void)train(m, ds, nullptr, cfg);  // 3 epochs x 3 batches
  CHECK(extractor_state(m) == ext_before);
  const auto angles = std::get<QuantumHead>(m.head).params.angles();
  CHECK(!std::equal(angles.begin(), angles.end(), head_before.begin()));

  freeze(m);
  const std::string fp = m.fingerprint();
  const auto frozen = m.frozen_layer_count();
  freeze(m);
  CHECK(m.frozen_layer_count() == frozen);
  CHECK(m.fingerprint() == fp);
}

TEST_CASE("checkpoints") {
  const auto dir = fs::temp_directory_path() / "qtl_test_transfer";
  fs::create_directories(dir);
  Model m = build(Regime::QuantumNoTL, tiny_spec(), std::nullopt, 11);
  const Checkpoint c = model_checkpoint(m, 11, "quantum_notl");
  save_checkpoint(c, dir / "model.ckpt");
  const Checkpoint back = load_checkpoint(dir / "model.ckpt");
  CHECK(back == c);

  Model other = build(Regime::QuantumNoTL, tiny_spec(), std::nullopt, 12);
  load_model(other, back);
  CHECK(model_checkpoint(other, 11, "quantum_notl") == c);

  SUBCASE("architecture mismatch") {
    ModelSpec wide = tiny_spec();
    wide.conv_channels = 3;
    Model w = build(Regime::QuantumNoTL, wide, std::nullopt, 1);
    CHECK_THROWS_AS(load_model(w, c), CheckpointError);
    CHECK_THROWS_AS(build(Regime::ClassicalTL, wide, tiny_checkpoint(1), 1), CheckpointError);
  }
  SUBCASE("corrupt files") {
    std::ifstream in(dir / "model.ckpt", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
    CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), CheckpointError);
    std::ofstream(dir / "long.ckpt", std::ios::binary) << bytes << 'x';
    CHECK_THROWS_AS(load_checkpoint(dir / "long.ckpt"), CheckpointError);
    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream(dir / "magic.ckpt", std::ios::binary) << bad;
    CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), CheckpointError);
  }
  SUBCASE("extractor checkpoint kind") {
    Model q = build(Regime::QuantumNoTL, tiny_spec(), std::nullopt, 1);
    CHECK_THROWS_AS(load_extractor(q, c), CheckpointError);
  }
}

TEST_CASE("train guards and determinism") {
  const auto ds = data::synth_generate({3, 6, 8, 2, 0.3, data::SynthTask::Target});
  TrainConfig cfg;
  cfg.epochs = 0;
  Model m = build(Regime::ClassicalNoTL, tiny_spec(), std::nullopt, 1);
  CHECK_THROWS_AS(train(m, ds, nullptr, cfg), ConfigError);

  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.shuffle_seed = 9;
  Model a = build(Regime::QuantumNoTL, tiny_spec(), std::nullopt, 1);
  Model b = build(Regime::QuantumNoTL, tiny_spec(), std::nullopt, 1);
  const auto ha = train(a, ds, &ds, cfg);
  const auto hb = train(b, ds, &ds, cfg);
  REQUIRE(ha.size() == 2);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(ha[e].train_loss == hb[e].train_loss);
    CHECK(ha[e].test_accuracy == hb[e].test_accuracy);
  }
  CHECK(model_checkpoint(a, 0, "") == model_checkpoint(b, 0, ""));
}

TEST_CASE("divergence is reported") {
  const auto ds = data::synth_generate({3, 6, 8, 2, 0.3, data::SynthTask::Target});
  Model m = build(Regime::ClassicalNoTL, tiny_spec(), std::nullopt, 1);
  m.readout.parameters()[0]->value[0] = std::nan("");
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(m, ds, nullptr, cfg), DivergenceError);
}

TEST_CASE("evaluate") {
  data::Dataset ds(data::DatasetKind::FeatureVector, {3}, 2);
  for (int i = 0; i < 10; ++i) ds.add(std::vector<double>{0.1 * i, 1.0, -1.0}, i < 3 ? 0 : 1);
  ModelSpec spec;
  spec.input_kind = data::DatasetKind::FeatureVector;
  spec.sample_shape = {3};
  spec.n_qubits = 2;
  spec.depth = 1;
  Model m = build(Regime::ClassicalNoTL, spec, std::nullopt, 1);
  for (auto* p : m.readout.parameters()) p->value.fill(0.0);
  const auto e = evaluate(m, ds);
  CHECK(e.accuracy == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(e.mean_loss == doctest::Approx(std::log(2.0)));

  const Tensor logits({2, 2}, {5, -5, -5, 5});
  const std::vector<std::size_t> y{0, 1};
  CHECK(evaluate_logits(logits, y).accuracy == 1.0);
  CHECK_THROWS_AS(evaluate(m, data::Dataset(data::DatasetKind::FeatureVector, {3}, 2)), UsageError);
}

TEST_CASE("pretraining reaches high source accuracy") {
  ModelSpec spec;
  const auto source = data::synth_generate({4, 40, 16, 5, 0.0, data::SynthTask::Source});
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.optimizer.lr = 0.003;
  cfg.optimizer.schedule = nn::LrSchedule::Constant;
  cfg.shuffle_seed = 2;
  auto r = pretrain(spec, source, cfg, 3);
  CHECK(r.history.size() == 20);
  CHECK(evaluate(r.source_model, source).accuracy >= 0.95);
  CHECK(r.checkpoint.kind == "extractor");
  Model target = build(Regime::ClassicalTL, spec, r.checkpoint, 4);
  CHECK(extractor_state(target).size() == r.checkpoint.tensors.size());

  const auto mismatch = data::synth_generate({2, 4, 8, 5, 0.0, data::SynthTask::Source});
  CHECK_THROWS_AS(pretrain(spec, mismatch, cfg, 3), ShapeError);
}
