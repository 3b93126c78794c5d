#include "qtl/model.hpp"

#include <random>

#include "qtl/error.hpp"

namespace qtl::transfer {

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::ClassicalTL: return "classical_tl";
    case Regime::ClassicalNoTL: return "classical_notl";
    case Regime::QuantumTL: return "quantum_tl";
    case Regime::QuantumNoTL: return "quantum_notl";
  }
  return "?";
}

Regime parse_regime(const std::string& s) {
  for (auto r : {Regime::ClassicalTL, Regime::ClassicalNoTL, Regime::QuantumTL, Regime::QuantumNoTL}) {
    if (s == to_string(r)) return r;
  }
  throw ConfigError("unknown regime '" + s + "' (expected classical_tl, classical_notl, quantum_tl, quantum_notl)");
}

bool uses_transfer(Regime regime) { return regime == Regime::ClassicalTL || regime == Regime::QuantumTL; }
bool uses_quantum(Regime regime) { return regime == Regime::QuantumTL || regime == Regime::QuantumNoTL; }

// ---------------------------------------------------------------- forward

Tensor Model::forward(const Tensor& inputs, nn::Mode mode, Cache& cache) {
  Tensor h = extractor.forward(inputs, mode, cache.extractor);
  h = reduction.forward(h, mode, cache.reduction);
  if (auto* q = std::get_if<QuantumHead>(&head)) {
    if (h.rank() != 2 || h.dim(1) != static_cast<std::size_t>(q->params.n_qubits())) {
      throw ShapeError("quantum head expects (N, " + std::to_string(q->params.n_qubits()) + "), got " +
                       to_string(h.shape()));
    }
    Tensor z(h.shape());
    for (std::size_t i = 0; i < h.dim(0); ++i) {
      const auto out = qvc::forward(h.row(i), q->params, q->encoding);
      std::copy(out.begin(), out.end(), z.row(i).begin());
    }
    cache.head_input = std::move(h);
    h = std::move(z);
  } else {
    h = std::get<ClassicalHead>(head).layers.forward(h, mode, cache.head);
  }
  return readout.forward(h, mode, cache.readout);
}

Tensor Model::logits(const Tensor& inputs) {
  Cache cache;
  return forward(inputs, nn::Mode::Eval, cache);
}

Model::Grads Model::backward(const Cache& cache, const Tensor& logits_grad, bool want_param_grads,
                             bool want_input_grad) {
  Grads g;
  const auto* q = std::get_if<QuantumHead>(&head);
  const bool head_trainable = q ? !q->frozen : !std::get<ClassicalHead>(head).layers.all_frozen();
  const bool ext_flow = want_input_grad || (want_param_grads && !extractor.all_frozen());
  const bool red_flow = ext_flow || (want_param_grads && !reduction.all_frozen());
  const bool head_flow = red_flow || (want_param_grads && head_trainable);

  Tensor up = readout.backward(cache.readout, logits_grad, want_param_grads ? &g.readout : nullptr);
  if (!head_flow) return g;

  if (q) {
    if (cache.head_input.empty()) throw UsageError("quantum head: backward without forward");
    const bool want_q = want_param_grads && !q->frozen;
    Tensor below(cache.head_input.shape());
    if (want_q) g.quantum.assign(q->params.size(), 0.0);
    for (std::size_t i = 0; i < cache.head_input.dim(0); ++i) {
      const auto vjp = qvc::backward(cache.head_input.row(i), q->params, q->encoding, up.row(i), red_flow, want_q);
      if (red_flow) std::copy(vjp.input_grad.begin(), vjp.input_grad.end(), below.row(i).begin());
      for (std::size_t k = 0; k < vjp.param_grad.size(); ++k) g.quantum[k] += vjp.param_grad[k];
    }
    up = std::move(below);
  } else {
    up = std::get<ClassicalHead>(head).layers.backward(cache.head, up, want_param_grads ? &g.head : nullptr);
  }
  if (!red_flow) return g;

  up = reduction.backward(cache.reduction, up, want_param_grads ? &g.reduction : nullptr);
  if (!ext_flow) return g;

  up = extractor.backward(cache.extractor, up, want_param_grads ? &g.extractor : nullptr);
  if (want_input_grad) g.input = std::move(up);
  return g;
}

namespace {

void append_slots(nn::Sequential& seq, const std::vector<Tensor>& grads, std::vector<nn::ParamSlot>& out) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const bool frozen = seq[i].frozen();
    for (auto* p : seq[i].parameters()) {
      std::span<const double> grad;
      if (k < grads.size()) grad = grads[k].data();
      if (!frozen && grad.size() != p->value.size()) {
        throw UsageError("missing gradient for trainable parameter '" + p->name + "'");
      }
      out.push_back({p->value.data(), grad, frozen});
      ++k;
    }
  }
}

std::size_t count_trainable(nn::Sequential& seq) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i].frozen()) continue;
    for (auto* p : seq[i].parameters()) n += p->value.size();
  }
  return n;
}

std::size_t count_frozen(const nn::Sequential& seq) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) n += seq[i].frozen() ? 1 : 0;
  return n;
}

}  // namespace

std::vector<nn::ParamSlot> Model::slots(const Grads& grads) {
  std::vector<nn::ParamSlot> out;
  append_slots(extractor, grads.extractor, out);
  append_slots(reduction, grads.reduction, out);
  if (auto* q = std::get_if<QuantumHead>(&head)) {
    if (!q->frozen && grads.quantum.size() != q->params.size()) {
      throw UsageError("missing gradient for quantum head");
    }
    out.push_back({q->params.angles(), grads.quantum, q->frozen});
  } else {
    append_slots(std::get<ClassicalHead>(head).layers, grads.head, out);
  }
  append_slots(readout, grads.readout, out);
  return out;
}

std::size_t Model::quantum_parameter_count() const {
  const auto* q = std::get_if<QuantumHead>(&head);
  return q ? q->params.size() : 0;
}

std::size_t Model::trainable_parameter_count() {
  std::size_t n = count_trainable(extractor) + count_trainable(reduction) + count_trainable(readout);
  if (auto* q = std::get_if<QuantumHead>(&head)) {
    if (!q->frozen) n += q->params.size();
  } else {
    n += count_trainable(std::get<ClassicalHead>(head).layers);
  }
  return n;
}

std::size_t Model::frozen_layer_count() const {
  std::size_t n = count_frozen(extractor) + count_frozen(reduction) + count_frozen(readout);
  if (const auto* q = std::get_if<QuantumHead>(&head)) {
    n += q->frozen ? 1 : 0;
  } else {
    n += count_frozen(std::get<ClassicalHead>(head).layers);
  }
  return n;
}

std::string Model::fingerprint() const {
  std::string head_fp;
  if (const auto* q = std::get_if<QuantumHead>(&head)) {
    head_fp = "qvc(n" + std::to_string(q->params.n_qubits()) + ",d" + std::to_string(q->params.depth()) +
              (q->params.entanglement() == qvc::Entanglement::Ring ? ",ring" : ",linear") +
              (q->encoding.mode == qvc::ScaleMode::TanhHalfPi ? ",tanh" : ",linear-enc") + ")";
  } else {
    head_fp = std::get<ClassicalHead>(head).layers.fingerprint();
  }
  return extractor.fingerprint() + " # " + reduction.fingerprint() + " # " + head_fp + " # " +
         readout.fingerprint();
}

// ------------------------------------------------------------------ build

namespace {
// He init scaled down: encoding angles and logits start near zero
constexpr double kReductionInitScale = 0.1;
constexpr double kReadoutInitScale = 0.1;

void scale_parameters(nn::Sequential& seq, double factor) {
  for (auto* p : seq.parameters())
    for (double& v : p->value.data()) v *= factor;
}
}  // namespace

nn::Sequential make_extractor(const ModelSpec& spec) {
  nn::Sequential seq;
  if (spec.input_kind == data::DatasetKind::FeatureVector) return seq;
  const Shape& s = spec.sample_shape;
  if (s.size() != 3 || s[1] < 4 || s[2] < 4) {
    throw ShapeError("image extractor needs (C, H, W) samples of at least 4x4, got " + to_string(s));
  }
  const std::size_t ch = spec.conv_channels;
  seq.add<nn::Conv2D>(s[0], ch, 3, 1, 1);
  seq.add<nn::BatchNorm>(ch);
  seq.add<nn::ReLU>();
  seq.add<nn::MaxPool>(2, 2);
  seq.add<nn::ResidualBlock>(ch, ch, 1, nn::Shortcut::Identity);
  seq.add<nn::ReLU>();
  seq.add<nn::Flatten>();
  seq.add<nn::Dense>(ch * (s[1] / 2) * (s[2] / 2), spec.hidden_width);
  seq.add<nn::BatchNorm>(spec.hidden_width);
  seq.add<nn::ReLU>();
  return seq;
}

std::size_t extractor_width(const ModelSpec& spec) {
  if (spec.input_kind == data::DatasetKind::FeatureVector) return shape_size(spec.sample_shape);
  return spec.hidden_width;
}

void freeze(Model& model) {
  model.extractor.set_frozen(true);
  model.reduction.set_frozen(false);
  if (auto* q = std::get_if<QuantumHead>(&model.head)) {
    q->frozen = false;
  } else {
    std::get<ClassicalHead>(model.head).layers.set_frozen(false);
  }
  model.readout.set_frozen(false);
}

Model build(Regime regime, const ModelSpec& spec, const std::optional<Checkpoint>& checkpoint,
            std::uint64_t init_seed) {
  const bool features = spec.input_kind == data::DatasetKind::FeatureVector;
  if (uses_transfer(regime) && !features && !checkpoint) {
    throw ConfigError(to_string(regime) + " needs a pretrained extractor checkpoint");
  }
  if (checkpoint && (!uses_transfer(regime) || features)) {
    throw ConfigError(to_string(regime) + (features ? " on feature vectors" : "") +
                      " does not take an extractor checkpoint");
  }
  if (spec.classes == 0) throw ConfigError("model needs at least one class");
  std::mt19937_64 rng(init_seed);
  Model m;
  m.extractor = make_extractor(spec);
  m.extractor.initialize(rng);
  std::size_t head_width = extractor_width(spec);
  if (uses_quantum(regime)) {
    head_width = static_cast<std::size_t>(spec.n_qubits);
    m.reduction.add<nn::Dense>(extractor_width(spec), head_width);
    m.reduction.initialize(rng);
    scale_parameters(m.reduction, kReductionInitScale);
    m.head = QuantumHead{qvc::QvcParams::random(spec.n_qubits, spec.depth, spec.init_spread, rng, spec.entanglement),
                         spec.encoding, false};
  } else {
    // a single trainable dense layer on the extracted features
    m.head = ClassicalHead{};
  }
  m.readout.add<nn::Dense>(head_width, spec.classes);
  m.readout.initialize(rng);
  // a fixed readout keeps full scale
  if (!(spec.fixed_readout && !uses_transfer(regime))) scale_parameters(m.readout, kReadoutInitScale);
  if (uses_transfer(regime)) {
    if (checkpoint) load_extractor(m, *checkpoint);
    freeze(m);
  } else if (spec.fixed_readout) {
    m.readout.set_frozen(true);
  }
  return m;
}

Model build_source_model(const ModelSpec& spec, std::size_t source_classes, std::uint64_t init_seed) {
  if (spec.input_kind != data::DatasetKind::Image) throw ConfigError("pretraining needs image inputs");
  std::mt19937_64 rng(init_seed);
  Model m;
  m.extractor = make_extractor(spec);
  m.extractor.initialize(rng);
  m.readout.add<nn::Dense>(spec.hidden_width, source_classes);
  m.readout.initialize(rng);
  return m;
}

// ------------------------------------------------------------- checkpoint

namespace {

void collect(nn::Sequential& seq, const std::string& prefix, std::vector<NamedTensor>& out) {
  std::size_t k = 0;
  for (auto* p : seq.parameters()) out.push_back({prefix + ".p" + std::to_string(k++) + "." + p->name, p->value});
  k = 0;
  for (auto* b : seq.buffers()) out.push_back({prefix + ".b" + std::to_string(k++) + "." + b->name, b->value});
}

std::vector<Tensor*> targets(nn::Sequential& seq) {
  std::vector<Tensor*> out;
  for (auto* p : seq.parameters()) out.push_back(&p->value);
  for (auto* b : seq.buffers()) out.push_back(&b->value);
  return out;
}

void restore(const std::vector<Tensor*>& dst, const std::vector<NamedTensor>& src, std::size_t& pos) {
  for (auto* t : dst) {
    if (pos >= src.size()) throw CheckpointError("checkpoint has too few tensors");
    if (src[pos].value.shape() != t->shape()) {
      throw CheckpointError("tensor '" + src[pos].name + "' has shape " + to_string(src[pos].value.shape()) +
                            ", model expects " + to_string(t->shape()));
    }
    *t = src[pos++].value;
  }
}

}  // namespace

Checkpoint extractor_checkpoint(Model& model, std::uint64_t seed, const std::string& regime) {
  Checkpoint c{"extractor", model.extractor.fingerprint(), seed, regime, {}};
  collect(model.extractor, "extractor", c.tensors);
  return c;
}

void load_extractor(Model& model, const Checkpoint& checkpoint) {
  if (checkpoint.kind != "extractor") throw CheckpointError("expected an extractor checkpoint, got " + checkpoint.kind);
  if (checkpoint.fingerprint != model.extractor.fingerprint()) {
    throw CheckpointError("architecture mismatch: checkpoint '" + checkpoint.fingerprint + "' vs model '" +
                          model.extractor.fingerprint() + "'");
  }
  std::size_t pos = 0;
  restore(targets(model.extractor), checkpoint.tensors, pos);
  if (pos != checkpoint.tensors.size()) throw CheckpointError("checkpoint has extra tensors");
}

Checkpoint model_checkpoint(Model& model, std::uint64_t seed, const std::string& regime) {
  Checkpoint c{"model", model.fingerprint(), seed, regime, {}};
  collect(model.extractor, "extractor", c.tensors);
  collect(model.reduction, "reduction", c.tensors);
  if (auto* q = std::get_if<QuantumHead>(&model.head)) {
    const auto a = q->params.angles();
    c.tensors.push_back({"head.angles",
                         Tensor({static_cast<std::size_t>(q->params.depth()),
                                 static_cast<std::size_t>(q->params.n_qubits()), 3},
                                std::vector<double>(a.begin(), a.end()))});
  } else {
    collect(std::get<ClassicalHead>(model.head).layers, "head", c.tensors);
  }
  collect(model.readout, "readout", c.tensors);
  return c;
}

void load_model(Model& model, const Checkpoint& checkpoint) {
  if (checkpoint.kind != "model") throw CheckpointError("expected a model checkpoint, got " + checkpoint.kind);
  if (checkpoint.fingerprint != model.fingerprint()) {
    throw CheckpointError("architecture mismatch: checkpoint '" + checkpoint.fingerprint + "' vs model '" +
                          model.fingerprint() + "'");
  }
  std::size_t pos = 0;
  restore(targets(model.extractor), checkpoint.tensors, pos);
  restore(targets(model.reduction), checkpoint.tensors, pos);
  if (auto* q = std::get_if<QuantumHead>(&model.head)) {
    if (pos >= checkpoint.tensors.size() || checkpoint.tensors[pos].value.size() != q->params.size()) {
      throw CheckpointError("checkpoint quantum head does not match the model");
    }
    const auto src = checkpoint.tensors[pos++].value.data();
    std::copy(src.begin(), src.end(), q->params.angles().begin());
  } else {
    restore(targets(std::get<ClassicalHead>(model.head).layers), checkpoint.tensors, pos);
  }
  restore(targets(model.readout), checkpoint.tensors, pos);
  if (pos != checkpoint.tensors.size()) throw CheckpointError("checkpoint has extra tensors");
}

}  // namespace qtl::transfer
