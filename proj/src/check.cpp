#include "qtl/check.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "qtl/error.hpp"

namespace qtl::check {

namespace {

DenseMatrix two_by_two(Amplitude a, Amplitude b, Amplitude c, Amplitude d) { return {2, {a, b, c, d}}; }

DenseMatrix single_qubit(const sv::Gate& g) {
  using namespace std::complex_literals;
  const double c = std::cos(g.angle / 2), s = std::sin(g.angle / 2);
  switch (g.kind) {
    case sv::GateKind::H: {
      const double r = 1.0 / std::sqrt(2.0);
      return two_by_two(r, r, r, -r);
    }
    case sv::GateKind::RX:
      return two_by_two(c, -1i * s, -1i * s, c);
    case sv::GateKind::RY:
      return two_by_two(c, -s, s, c);
    case sv::GateKind::RZ:
      return two_by_two(std::exp(-0.5i * g.angle), 0.0, 0.0, std::exp(0.5i * g.angle));
    case sv::GateKind::CNOT:
      break;
  }
  throw UsageError("not a single-qubit gate");
}

// Operator on wire `w` with identities elsewhere.
DenseMatrix embed(const DenseMatrix& op, int wire, int n) {
  DenseMatrix m = identity(1);
  for (int q = n - 1; q >= 0; --q) m = kron(m, q == wire ? op : identity(2));
  return m;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

}  // namespace

DenseMatrix identity(std::size_t dim) {
  DenseMatrix m{dim, std::vector<Amplitude>(dim * dim)};
  for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix m{a.dim * b.dim, std::vector<Amplitude>(a.dim * b.dim * a.dim * b.dim)};
  for (std::size_t i = 0; i < a.dim; ++i)
    for (std::size_t j = 0; j < a.dim; ++j)
      for (std::size_t k = 0; k < b.dim; ++k)
        for (std::size_t l = 0; l < b.dim; ++l) m(i * b.dim + k, j * b.dim + l) = a(i, j) * b(k, l);
  return m;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.dim != b.dim) throw ShapeError("matmul: dimension mismatch");
  DenseMatrix m{a.dim, std::vector<Amplitude>(a.dim * a.dim)};
  for (std::size_t i = 0; i < a.dim; ++i)
    for (std::size_t k = 0; k < a.dim; ++k)
      for (std::size_t j = 0; j < a.dim; ++j) m(i, j) += a(i, k) * b(k, j);
  return m;
}

std::vector<Amplitude> matvec(const DenseMatrix& m, std::span<const Amplitude> v) {
  if (v.size() != m.dim) throw ShapeError("matvec: dimension mismatch");
  std::vector<Amplitude> out(m.dim);
  for (std::size_t i = 0; i < m.dim; ++i)
    for (std::size_t j = 0; j < m.dim; ++j) out[i] += m(i, j) * v[j];
  return out;
}

std::vector<sv::Gate> random_circuit(std::mt19937_64& rng, int n_qubits, int count) {
  std::uniform_int_distribution<int> kind(0, n_qubits > 1 ? 4 : 3);
  std::uniform_int_distribution<int> wire(0, n_qubits - 1);
  std::uniform_real_distribution<double> angle(-2 * std::numbers::pi, 2 * std::numbers::pi);
  std::vector<sv::Gate> gates;
  for (int i = 0; i < count; ++i) {
    switch (kind(rng)) {
      case 0: gates.push_back(sv::Gate::h(wire(rng))); break;
      case 1: gates.push_back(sv::Gate::rx(wire(rng), angle(rng))); break;
      case 2: gates.push_back(sv::Gate::ry(wire(rng), angle(rng))); break;
      case 3: gates.push_back(sv::Gate::rz(wire(rng), angle(rng))); break;
      default: {
        const int c = wire(rng);
        int t = wire(rng);
        while (t == c) t = wire(rng);
        gates.push_back(sv::Gate::cnot(c, t));
      }
    }
  }
  return gates;
}

DenseMatrix full_unitary(const sv::Gate& gate, int n_qubits) {
  if (gate.kind != sv::GateKind::CNOT) return embed(single_qubit(gate), gate.target, n_qubits);
  if (!gate.control) throw UsageError("CNOT without control");
  // |0><0|_c (x) I + |1><1|_c (x) X_t
  const DenseMatrix p0 = two_by_two(1, 0, 0, 0), p1 = two_by_two(0, 0, 0, 1), x = two_by_two(0, 1, 1, 0);
  return add(embed(p0, *gate.control, n_qubits), matmul(embed(p1, *gate.control, n_qubits), embed(x, gate.target, n_qubits)));
}

std::vector<Amplitude> run_dense(int n_qubits, std::span<const sv::Gate> gates) {
  std::vector<Amplitude> psi(std::size_t{1} << n_qubits);
  psi[0] = 1.0;
  for (const auto& g : gates) psi = matvec(full_unitary(g, n_qubits), psi);
  return psi;
}

double dense_expectation_z(std::span<const Amplitude> amps, int wire) {
  // Z on `wire` is diagonal with entries +1 / -1; build it the long way.
  const int n = static_cast<int>(std::log2(static_cast<double>(amps.size())));
  const DenseMatrix z = embed(two_by_two(1, 0, 0, -1), wire, n);
  const auto zpsi = matvec(z, amps);
  Amplitude acc = 0.0;
  for (std::size_t i = 0; i < amps.size(); ++i) acc += std::conj(amps[i]) * zpsi[i];
  return acc.real();
}

double max_abs_diff(std::span<const Amplitude> a, std::span<const Amplitude> b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("relative_error: size mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(std::max(na, nb)), kRelativeErrorFloor);
}

std::vector<double> central_difference(const ScalarFn& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw ConfigError("step must be positive");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2 * h);
  }
  return grad;
}

std::vector<double> qvc_dense_fd_gradient(std::span<const double> features, const qvc::QvcParams& params,
                                          const qvc::EncodingSpec& spec, std::span<const double> upstream,
                                          double h) {
  const int n = params.n_qubits();
  auto loss = [&](std::span<const double> angles) {
    qvc::QvcParams p = params;
    std::copy(angles.begin(), angles.end(), p.angles().begin());
    const auto gates = qvc::circuit_gates(features, p, spec);
    const auto psi = run_dense(n, gates);
    double l = 0.0;
    for (int w = 0; w < n; ++w) l += upstream[static_cast<std::size_t>(w)] * dense_expectation_z(psi, w);
    return l;
  };
  return central_difference(loss, params.angles(), h);
}

double LayerCheck::worst() const {
  double w = input_error;
  for (double e : param_errors) w = std::max(w, e);
  return w;
}

LayerCheck check_layer_gradients(nn::Layer& layer, const Tensor& input, nn::Mode mode, double h,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::Cache cache;
  const Tensor out = layer.forward(input, mode, cache);
  Tensor w(out.shape());
  for (double& v : w.data()) v = normal(rng);

  auto objective = [&](const Tensor& x) {
    nn::Cache c;
    const Tensor y = layer.forward(x, mode, c);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
  };

  const nn::Gradients g = layer.backward(cache, w, true);
  LayerCheck result;

  const auto fd_input = central_difference(
      [&](std::span<const double> x) { return objective(Tensor(input.shape(), std::vector<double>(x.begin(), x.end()))); },
      input.data(), h);
  result.input_error = relative_error(g.input_grad.data(), fd_input);

  auto params = layer.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& value = params[k]->value;
    const Tensor original = value;
    const auto fd = central_difference(
        [&](std::span<const double> theta) {
          std::copy(theta.begin(), theta.end(), value.data().begin());
          return objective(input);
        },
        original.data(), h);
    value = original;
    result.param_errors.push_back(relative_error(g.param_grads.at(k).data(), fd));
  }
  return result;
}

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> d(0.0, 1.0);
  for (double& v : t.data()) v = d(rng);
  return t;
}

void randomize(nn::Layer& layer, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 0.5);
  for (auto* p : layer.parameters())
    for (double& v : p->value.data()) v = d(rng);
}

}  // namespace

std::vector<NamedLayerCheck> layer_gradient_suite(double h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<NamedLayerCheck> out;
  auto run = [&](const std::string& name, nn::Layer& layer, Shape shape, nn::Mode mode) {
    const Tensor x = random_tensor(std::move(shape), rng);
    out.push_back({name, check_layer_gradients(layer, x, mode, h, rng())});
  };

  nn::Dense dense(5, 3);
  randomize(dense, rng);
  run("Dense", dense, {4, 5}, nn::Mode::Train);

  nn::Conv2D conv(2, 3, 3, 2, 1);
  randomize(conv, rng);
  run("Conv2D stride 2 pad 1", conv, {2, 2, 5, 5}, nn::Mode::Train);
  nn::Conv2D plain(1, 2, 2);
  randomize(plain, rng);
  run("Conv2D plain", plain, {1, 1, 4, 3}, nn::Mode::Train);

  nn::ReLU relu;
  run("ReLU", relu, {3, 7}, nn::Mode::Train);

  nn::MaxPool pool(2, 2);
  run("MaxPool 2/2", pool, {2, 2, 4, 4}, nn::Mode::Train);
  nn::MaxPool overlap(3, 1);
  run("MaxPool 3/1", overlap, {1, 1, 5, 5}, nn::Mode::Train);

  nn::Flatten flatten;
  run("Flatten", flatten, {2, 3, 2, 2}, nn::Mode::Train);

  nn::BatchNorm bn(3);
  randomize(bn, rng);
  run("BatchNorm train (N,C,H,W)", bn, {4, 3, 2, 2}, nn::Mode::Train);
  run("BatchNorm train (N,C)", bn, {5, 3}, nn::Mode::Train);
  for (double& v : bn.running_var().data()) v = 0.5 + std::abs(v);
  run("BatchNorm eval", bn, {4, 3, 2, 2}, nn::Mode::Eval);

  nn::ResidualBlock identity(2, 2);
  identity.initialize(rng);
  randomize(identity, rng);
  run("ResidualBlock identity", identity, {3, 2, 4, 4}, nn::Mode::Train);
  nn::ResidualBlock projection(2, 3, 2, nn::Shortcut::Projection);
  projection.initialize(rng);
  randomize(projection, rng);
  run("ResidualBlock projection", projection, {3, 2, 4, 4}, nn::Mode::Train);
  return out;
}

}  // namespace qtl::check
