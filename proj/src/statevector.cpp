#include "qtl/statevector.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "qtl/error.hpp"

namespace qtl::sv {

namespace {

void check_qubit_count(int n_qubits) {
  if (n_qubits < 1 || n_qubits > kMaxQubits) {
    throw ConfigError("qubit count " + std::to_string(n_qubits) + " outside [1, " +
                      std::to_string(kMaxQubits) + "]");
  }
}

void check_wire(int wire, int n_qubits, const char* what) {
  if (wire < 0 || wire >= n_qubits) {
    throw ConfigError(std::string(what) + " index " + std::to_string(wire) +
                      " out of range for " + std::to_string(n_qubits) + " qubits");
  }
}

}  // namespace

Gate Gate::inverse() const {
  Gate inv = *this;
  if (is_rotation()) inv.angle = -angle;
  return inv;
}

Matrix2 gate_matrix(const Gate& gate) {
  const double c = std::cos(gate.angle / 2.0);
  const double s = std::sin(gate.angle / 2.0);
  switch (gate.kind) {
    case GateKind::H: {
      const double r = 1.0 / std::sqrt(2.0);
      return {Amplitude{r, 0}, Amplitude{r, 0}, Amplitude{r, 0}, Amplitude{-r, 0}};
    }
    case GateKind::RX:
      return {Amplitude{c, 0}, Amplitude{0, -s}, Amplitude{0, -s}, Amplitude{c, 0}};
    case GateKind::RY:
      return {Amplitude{c, 0}, Amplitude{-s, 0}, Amplitude{s, 0}, Amplitude{c, 0}};
    case GateKind::RZ:
      return {Amplitude{c, -s}, Amplitude{0, 0}, Amplitude{0, 0}, Amplitude{c, s}};
    case GateKind::CNOT:
      break;
  }
  throw UsageError("CNOT is a two-qubit gate and has no 2x2 matrix");
}

StateVector::StateVector(int n_qubits) : n_qubits_(n_qubits) {
  check_qubit_count(n_qubits);
  amps_.assign(std::size_t{1} << n_qubits, Amplitude{0.0, 0.0});
  amps_[0] = Amplitude{1.0, 0.0};
}

StateVector::StateVector(int n_qubits, std::vector<Amplitude> amps)
    : n_qubits_(n_qubits), amps_(std::move(amps)) {}

StateVector StateVector::basis(int n_qubits, std::size_t index) {
  StateVector s(n_qubits);
  if (index >= s.dim()) throw ConfigError("basis index out of range");
  s.amps_[0] = Amplitude{0.0, 0.0};
  s.amps_[index] = Amplitude{1.0, 0.0};
  return s;
}

StateVector StateVector::from_amplitudes(int n_qubits, std::vector<Amplitude> amps) {
  check_qubit_count(n_qubits);
  if (amps.size() != (std::size_t{1} << n_qubits)) {
    throw ShapeError("expected " + std::to_string(std::size_t{1} << n_qubits) +
                     " amplitudes, got " + std::to_string(amps.size()));
  }
  StateVector s(n_qubits, std::move(amps));
  if (std::abs(s.norm_squared() - 1.0) > 1e-9) throw ConfigError("amplitudes are not normalized");
  return s;
}

void validate_gate(const Gate& gate, int n_qubits) {
  check_wire(gate.target, n_qubits, "target");
  if (gate.kind == GateKind::CNOT) {
    if (!gate.control) throw ConfigError("CNOT requires a control qubit");
    check_wire(*gate.control, n_qubits, "control");
    if (*gate.control == gate.target) throw ConfigError("CNOT control equals target");
  } else if (gate.control) {
    throw ConfigError("only CNOT takes a control qubit");
  }
  if (gate.is_rotation() && !std::isfinite(gate.angle)) {
    throw ConfigError("rotation angle is not finite");
  }
}

void StateVector::apply(const Gate& gate) {
  validate_gate(gate, n_qubits_);
  switch (gate.kind) {
    case GateKind::CNOT:
      apply_cnot(*gate.control, gate.target);
      return;
    case GateKind::H:
      apply_h(gate.target);
      return;
    default:
      apply_rotation(gate.kind, gate.target, std::cos(gate.angle / 2.0), std::sin(gate.angle / 2.0));
  }
}

void StateVector::apply_rotation(GateKind kind, int target, double c, double s) {
  check_wire(target, n_qubits_, "target");
  switch (kind) {
    case GateKind::RX:
      apply_rx(target, c, s);
      return;
    case GateKind::RY:
      apply_ry(target, c, s);
      return;
    case GateKind::RZ:
      apply_rz(target, c, s);
      return;
    default:
      throw UsageError("apply_rotation needs RX, RY or RZ");
  }
}

// Kernels walk amplitude pairs (i, i + stride) that differ only in the
// target bit, over the interleaved (re, im) doubles of the buffer.

void StateVector::apply_single(int target, const Matrix2& m) {
  const std::size_t stride = std::size_t{1} << target;
  const std::size_t n = amps_.size();
  for (std::size_t base = 0; base < n; base += 2 * stride) {
    for (std::size_t i = base; i < base + stride; ++i) {
      const Amplitude a0 = amps_[i];
      const Amplitude a1 = amps_[i + stride];
      amps_[i] = m[0] * a0 + m[1] * a1;
      amps_[i + stride] = m[2] * a0 + m[3] * a1;
    }
  }
}

void StateVector::apply_h(int target) {
  const double r = 1.0 / std::numbers::sqrt2;
  const std::size_t stride = 2 * (std::size_t{1} << target);
  double* a = reinterpret_cast<double*>(amps_.data());
  const std::size_t n = 2 * amps_.size();
  for (std::size_t base = 0; base < n; base += 2 * stride) {
    for (std::size_t i = base; i < base + stride; ++i) {
      const double x = a[i], y = a[i + stride];
      a[i] = r * (x + y);
      a[i + stride] = r * (x - y);
    }
  }
}

void StateVector::apply_ry(int target, double c, double s) {
  const std::size_t stride = 2 * (std::size_t{1} << target);
  double* a = reinterpret_cast<double*>(amps_.data());
  const std::size_t n = 2 * amps_.size();
  for (std::size_t base = 0; base < n; base += 2 * stride) {
    for (std::size_t i = base; i < base + stride; ++i) {
      const double x = a[i], y = a[i + stride];
      a[i] = c * x - s * y;
      a[i + stride] = s * x + c * y;
    }
  }
}

void StateVector::apply_rx(int target, double c, double s) {
  // [[c, -is], [-is, c]]
  const std::size_t stride = 2 * (std::size_t{1} << target);
  double* a = reinterpret_cast<double*>(amps_.data());
  const std::size_t n = 2 * amps_.size();
  for (std::size_t base = 0; base < n; base += 2 * stride) {
    for (std::size_t i = base; i < base + stride; i += 2) {
      const double r0 = a[i], i0 = a[i + 1], r1 = a[i + stride], i1 = a[i + stride + 1];
      a[i] = c * r0 + s * i1;
      a[i + 1] = c * i0 - s * r1;
      a[i + stride] = s * i0 + c * r1;
      a[i + stride + 1] = c * i1 - s * r0;
    }
  }
}

void StateVector::apply_rz(int target, double c, double s) {
  // diag(c - is, c + is)
  const std::size_t stride = 2 * (std::size_t{1} << target);
  double* a = reinterpret_cast<double*>(amps_.data());
  const std::size_t n = 2 * amps_.size();
  for (std::size_t base = 0; base < n; base += 2 * stride) {
    for (std::size_t i = base; i < base + stride; i += 2) {
      const double r0 = a[i], i0 = a[i + 1], r1 = a[i + stride], i1 = a[i + stride + 1];
      a[i] = c * r0 + s * i0;
      a[i + 1] = c * i0 - s * r0;
      a[i + stride] = c * r1 - s * i1;
      a[i + stride + 1] = c * i1 + s * r1;
    }
  }
}

void StateVector::apply_cnot(int control, int target) {
  const std::size_t cbit = std::size_t{1} << control;
  const std::size_t tbit = std::size_t{1} << target;
  for (std::size_t i = 0; i < amps_.size(); ++i) {
    if ((i & cbit) && !(i & tbit)) std::swap(amps_[i], amps_[i | tbit]);
  }
}

double StateVector::norm_squared() const {
  double total = 0.0;
  for (const auto& a : amps_) total += std::norm(a);
  return total;
}

StateVector init_state(int n_qubits) { return StateVector(n_qubits); }

StateVector apply_gate(StateVector state, const Gate& gate) {
  state.apply(gate);
  return state;
}

double expectation_z(const StateVector& state, Observable obs) {
  check_wire(obs.wire, state.n_qubits(), "observable wire");
  const std::size_t bit = std::size_t{1} << obs.wire;
  double z = 0.0;
  for (std::size_t i = 0; i < state.dim(); ++i) {
    const double p = std::norm(state[i]);
    z += (i & bit) ? -p : p;
  }
  return z;
}

std::vector<double> expectation_z_all(const StateVector& state) {
  const int n = state.n_qubits();
  std::vector<double> z(static_cast<std::size_t>(n), 0.0);
  for (std::size_t i = 0; i < state.dim(); ++i) {
    const double p = std::norm(state[i]);
    for (int q = 0; q < n; ++q) z[static_cast<std::size_t>(q)] += ((i >> q) & 1U) ? -p : p;
  }
  return z;
}

}  // namespace qtl::sv
