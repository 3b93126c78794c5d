#include "qtl/qvc.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "qtl/error.hpp"

namespace qtl::qvc {

using sv::Gate;
using sv::StateVector;

double EncodingSpec::angle(double x) const {
  if (mode == ScaleMode::TanhHalfPi) return std::numbers::pi / 2.0 * std::tanh(x);
  return linear_scale * x;
}

double EncodingSpec::angle_derivative(double x) const {
  if (mode == ScaleMode::TanhHalfPi) {
    const double t = std::tanh(x);
    return std::numbers::pi / 2.0 * (1.0 - t * t);
  }
  return linear_scale;
}

QvcParams::QvcParams(int n_qubits, int depth, Entanglement entanglement)
    : n_qubits_(n_qubits), depth_(depth), entanglement_(entanglement) {
  if (n_qubits < 1 || n_qubits > sv::kMaxQubits) {
    throw ConfigError("QVC qubit count " + std::to_string(n_qubits) + " out of range");
  }
  if (depth < 1) throw ConfigError("QVC depth must be positive");
  angles_.assign(static_cast<std::size_t>(depth) * static_cast<std::size_t>(n_qubits) * 3, 0.0);
}

QvcParams QvcParams::random(int n_qubits, int depth, double spread, std::mt19937_64& rng,
                            Entanglement entanglement) {
  QvcParams p(n_qubits, depth, entanglement);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& a : p.angles_) a = spread * normal(rng);
  return p;
}

std::span<const double> QvcParams::layer(int l) const {
  const auto width = static_cast<std::size_t>(n_qubits_) * 3;
  return std::span<const double>(angles_).subspan(static_cast<std::size_t>(l) * width, width);
}

namespace {

void check_width(std::size_t got, int n_qubits, const char* what) {
  if (got != static_cast<std::size_t>(n_qubits)) {
    throw ShapeError(std::string(what) + " has length " + std::to_string(got) + ", expected " +
                     std::to_string(n_qubits));
  }
}

void append_layer(std::vector<Gate>& gates, int n, std::span<const double> layer_angles,
                  Entanglement entanglement) {
  for (int i = 0; i + 1 < n; ++i) gates.push_back(Gate::cnot(i, i + 1));
  if (entanglement == Entanglement::Ring && n > 2) gates.push_back(Gate::cnot(n - 1, 0));
  for (int w = 0; w < n; ++w) {
    const auto base = static_cast<std::size_t>(w) * 3;
    gates.push_back(Gate::rx(w, layer_angles[base]));
    gates.push_back(Gate::ry(w, layer_angles[base + 1]));
    gates.push_back(Gate::rz(w, layer_angles[base + 2]));
  }
}

std::size_t cnots_per_layer(int n, Entanglement entanglement) {
  auto count = static_cast<std::size_t>(n - 1);
  if (entanglement == Entanglement::Ring && n > 2) ++count;
  return count;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// A gate with its half-angle cos/sin computed once.
struct Prepared {
  Gate gate;
  double c = 1.0, s = 0.0;
};

std::vector<Prepared> prepare(std::span<const Gate> gates, int n) {
  std::vector<Prepared> out;
  out.reserve(gates.size());
  for (const auto& g : gates) {
    sv::validate_gate(g, n);
    out.push_back({g, std::cos(g.angle / 2.0), std::sin(g.angle / 2.0)});
  }
  return out;
}

void run(StateVector& state, const Prepared& p) {
  if (p.gate.is_rotation()) {
    state.apply_rotation(p.gate.kind, p.gate.target, p.c, p.s);
  } else {
    state.apply(p.gate);
  }
}

double contracted_output(std::span<const Gate> gates, int n, std::span<const double> upstream) {
  StateVector state(n);
  for (const auto& g : gates) state.apply(g);
  return dot(sv::expectation_z_all(state), upstream);
}

/// upstream . dz/d(angle) for every listed rotation gate (ascending gate
/// indices): each gate is shifted by +pi/2 and -pi/2 and the rest of the
/// circuit replayed from a cached prefix state.
std::vector<double> shift_rule_vjp(std::span<const Gate> gates, int n,
                                   std::span<const std::size_t> shifted,
                                   std::span<const double> upstream) {
  constexpr double kShift = std::numbers::pi / 2.0;
  const auto prepared = prepare(gates, n);
  std::vector<double> grad(shifted.size(), 0.0);
  StateVector prefix(n);
  StateVector branch(n);
  std::size_t next = 0;
  for (std::size_t k = 0; k < shifted.size(); ++k) {
    const std::size_t target = shifted[k];
    for (; next < target; ++next) run(prefix, prepared[next]);
    double value[2] = {0.0, 0.0};
    for (int side = 0; side < 2; ++side) {
      branch = prefix;
      const Gate& g = gates[target];
      const double angle = g.angle + (side == 0 ? kShift : -kShift);
      branch.apply_rotation(g.kind, g.target, std::cos(angle / 2.0), std::sin(angle / 2.0));
      for (std::size_t j = target + 1; j < gates.size(); ++j) run(branch, prepared[j]);
      value[side] = dot(sv::expectation_z_all(branch), upstream);
    }
    grad[k] = 0.5 * (value[0] - value[1]);
  }
  return grad;
}

std::vector<std::size_t> param_gate_indices(const QvcParams& params) {
  const int n = params.n_qubits();
  const std::size_t ncnot = cnots_per_layer(n, params.entanglement());
  const std::size_t per_layer = ncnot + 3 * static_cast<std::size_t>(n);
  std::vector<std::size_t> idx;
  idx.reserve(params.size());
  for (int l = 0; l < params.depth(); ++l) {
    const std::size_t base = 2 * static_cast<std::size_t>(n) + static_cast<std::size_t>(l) * per_layer + ncnot;
    for (std::size_t r = 0; r < 3 * static_cast<std::size_t>(n); ++r) idx.push_back(base + r);
  }
  return idx;
}

}  // namespace

StateVector encode(std::span<const double> features, const EncodingSpec& spec) {
  const auto n = static_cast<int>(features.size());
  StateVector state(n);
  for (int i = 0; i < n; ++i) {
    state.apply(Gate::h(i));
    state.apply(Gate::ry(i, spec.angle(features[static_cast<std::size_t>(i)])));
  }
  return state;
}

StateVector variational_layer(StateVector state, std::span<const double> layer_angles,
                              Entanglement entanglement) {
  const int n = state.n_qubits();
  if (layer_angles.size() != static_cast<std::size_t>(n) * 3) {
    throw ShapeError("layer has " + std::to_string(layer_angles.size()) + " angles, register needs " +
                     std::to_string(3 * n));
  }
  std::vector<Gate> gates;
  append_layer(gates, n, layer_angles, entanglement);
  for (const auto& g : gates) state.apply(g);
  return state;
}

std::vector<Gate> circuit_gates(std::span<const double> features, const QvcParams& params,
                                const EncodingSpec& spec) {
  const int n = params.n_qubits();
  check_width(features.size(), n, "feature vector");
  std::vector<Gate> gates;
  gates.reserve(2 * static_cast<std::size_t>(n) +
                static_cast<std::size_t>(params.depth()) * (cnots_per_layer(n, params.entanglement()) + 3 * static_cast<std::size_t>(n)));
  for (int i = 0; i < n; ++i) {
    gates.push_back(Gate::h(i));
    gates.push_back(Gate::ry(i, spec.angle(features[static_cast<std::size_t>(i)])));
  }
  for (int l = 0; l < params.depth(); ++l) append_layer(gates, n, params.layer(l), params.entanglement());
  return gates;
}

std::vector<double> forward(std::span<const double> features, const QvcParams& params,
                            const EncodingSpec& spec) {
  StateVector state(params.n_qubits());
  for (const auto& g : circuit_gates(features, params, spec)) state.apply(g);
  return sv::expectation_z_all(state);
}

std::vector<double> param_shift_gradient(std::span<const double> features, const QvcParams& params,
                                         const EncodingSpec& spec,
                                         std::span<const double> upstream) {
  check_width(upstream.size(), params.n_qubits(), "upstream gradient");
  const auto gates = circuit_gates(features, params, spec);
  const auto idx = param_gate_indices(params);
  return shift_rule_vjp(gates, params.n_qubits(), idx, upstream);
}

std::vector<double> finite_difference_gradient(std::span<const double> features,
                                               const QvcParams& params, const EncodingSpec& spec,
                                               std::span<const double> upstream, double h,
                                               DifferenceScheme scheme) {
  if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("finite-difference step must be > 0");
  const int n = params.n_qubits();
  check_width(upstream.size(), n, "upstream gradient");
  auto gates = circuit_gates(features, params, spec);
  const auto idx = param_gate_indices(params);
  const double base = scheme == DifferenceScheme::Forward ? contracted_output(gates, n, upstream) : 0.0;
  std::vector<double> grad(idx.size(), 0.0);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    Gate& g = gates[idx[k]];
    const double theta = g.angle;
    g.angle = theta + h;
    const double plus = contracted_output(gates, n, upstream);
    if (scheme == DifferenceScheme::Forward) {
      grad[k] = (plus - base) / h;
    } else {
      g.angle = theta - h;
      const double minus = contracted_output(gates, n, upstream);
      grad[k] = (plus - minus) / (2.0 * h);
    }
    g.angle = theta;
  }
  return grad;
}

std::vector<double> input_gradient(std::span<const double> features, const QvcParams& params,
                                   const EncodingSpec& spec, std::span<const double> upstream) {
  const int n = params.n_qubits();
  check_width(upstream.size(), n, "upstream gradient");
  const auto gates = circuit_gates(features, params, spec);
  std::vector<std::size_t> idx(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = 2 * i + 1;
  auto grad = shift_rule_vjp(gates, n, idx, upstream);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= spec.angle_derivative(features[i]);
  return grad;
}

Vjp backward(std::span<const double> features, const QvcParams& params, const EncodingSpec& spec,
             std::span<const double> upstream, bool want_input_grad, bool want_param_grad) {
  const int n = params.n_qubits();
  check_width(upstream.size(), n, "upstream gradient");
  const auto gates = circuit_gates(features, params, spec);
  std::vector<std::size_t> idx;
  if (want_input_grad)
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) idx.push_back(2 * i + 1);
  if (want_param_grad) {
    const auto p = param_gate_indices(params);
    idx.insert(idx.end(), p.begin(), p.end());
  }
  auto grad = shift_rule_vjp(gates, n, idx, upstream);
  Vjp out;
  auto it = grad.begin();
  if (want_input_grad) {
    out.input_grad.assign(it, it + n);
    for (std::size_t i = 0; i < out.input_grad.size(); ++i) out.input_grad[i] *= spec.angle_derivative(features[i]);
    it += n;
  }
  if (want_param_grad) out.param_grad.assign(it, grad.end());
  return out;
}

}  // namespace qtl::qvc
