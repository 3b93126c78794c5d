#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace qtl::sv {

using Amplitude = std::complex<double>;

/// Row-major 2x2 complex matrix.
using Matrix2 = std::array<Amplitude, 4>;

inline constexpr int kMaxQubits = 12;

enum class GateKind { H, RX, RY, RZ, CNOT };

/// A single gate. Rotations follow exp(-i * angle * P / 2).
struct Gate {
  GateKind kind = GateKind::H;
  int target = 0;
  std::optional<int> control;
  double angle = 0.0;

  static Gate h(int target) { return {GateKind::H, target, std::nullopt, 0.0}; }
  static Gate rx(int target, double angle) { return {GateKind::RX, target, std::nullopt, angle}; }
  static Gate ry(int target, double angle) { return {GateKind::RY, target, std::nullopt, angle}; }
  static Gate rz(int target, double angle) { return {GateKind::RZ, target, std::nullopt, angle}; }
  static Gate cnot(int control, int target) { return {GateKind::CNOT, target, control, 0.0}; }

  [[nodiscard]] bool is_rotation() const {
    return kind == GateKind::RX || kind == GateKind::RY || kind == GateKind::RZ;
  }

  /// H and CNOT are self-inverse; rotations negate their angle.
  [[nodiscard]] Gate inverse() const;
};

/// 2x2 unitary of a single-qubit gate. CNOT has no single-qubit matrix.
Matrix2 gate_matrix(const Gate& gate);

/// Pauli-Z measured on one wire.
struct Observable {
  int wire = 0;
};

/// Pure state of an n-qubit register. Qubit i addresses bit i of the basis
/// index (little-endian).
class StateVector {
 public:
  /// |0...0> on n qubits; throws ConfigError unless 1 <= n <= kMaxQubits.
  explicit StateVector(int n_qubits);

  /// Computational basis state |index>.
  static StateVector basis(int n_qubits, std::size_t index);

  /// Wraps explicit amplitudes; the length must be 2^n and the norm 1
  /// within 1e-9.
  static StateVector from_amplitudes(int n_qubits, std::vector<Amplitude> amps);

  [[nodiscard]] int n_qubits() const { return n_qubits_; }
  [[nodiscard]] std::size_t dim() const { return amps_.size(); }
  [[nodiscard]] std::span<const Amplitude> amplitudes() const { return amps_; }
  [[nodiscard]] const Amplitude& operator[](std::size_t i) const { return amps_[i]; }

  /// In-place gate application.
  void apply(const Gate& gate);
  /// RX, RY or RZ with precomputed c = cos(angle/2) and s = sin(angle/2),
  /// for callers replaying the same rotation many times.
  void apply_rotation(GateKind kind, int target, double c, double s);

  [[nodiscard]] double norm_squared() const;

 private:
  StateVector(int n_qubits, std::vector<Amplitude> amps);

  void apply_single(int target, const Matrix2& m);
  void apply_h(int target);
  void apply_rx(int target, double c, double s);
  void apply_ry(int target, double c, double s);
  void apply_rz(int target, double c, double s);
  void apply_cnot(int control, int target);

  int n_qubits_;
  std::vector<Amplitude> amps_;
};

StateVector init_state(int n_qubits);

/// Value-in/value-out gate application.
StateVector apply_gate(StateVector state, const Gate& gate);

/// Throws ConfigError if the gate is not valid on an n-qubit register.
void validate_gate(const Gate& gate, int n_qubits);

/// Sum over basis states of (+1 or -1) * |amp|^2, the sign taken from bit
/// `obs.wire` of the basis index.
double expectation_z(const StateVector& state, Observable obs);

/// <Z_i> for every wire i.
std::vector<double> expectation_z_all(const StateVector& state);

}  // namespace qtl::sv
