#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "qtl/statevector.hpp"

namespace qtl::qvc {

enum class ScaleMode {
  TanhHalfPi,  ///< angle = (pi/2) * tanh(x), bounded
  Linear,      ///< angle = linear_scale * x
};

/// Maps a classical feature to an RY encoding angle.
struct EncodingSpec {
  ScaleMode mode = ScaleMode::TanhHalfPi;
  double linear_scale = 2.0;

  [[nodiscard]] double angle(double x) const;
  /// d angle / d x
  [[nodiscard]] double angle_derivative(double x) const;
};

enum class Entanglement {
  Linear,  ///< CNOT(i, i+1) for i = 0..n-2
  Ring,    ///< linear chain closed with CNOT(n-1, 0) when n > 2
};

/// Trainable angles of the variational circuit, laid out
/// [layer][wire][axis] with axis 0..2 = (RX, RY, RZ).
class QvcParams {
 public:
  QvcParams() = default;
  QvcParams(int n_qubits, int depth, Entanglement entanglement = Entanglement::Linear);

  /// Angles drawn from spread * N(0, 1).
  static QvcParams random(int n_qubits, int depth, double spread, std::mt19937_64& rng,
                          Entanglement entanglement = Entanglement::Linear);

  [[nodiscard]] int n_qubits() const { return n_qubits_; }
  [[nodiscard]] int depth() const { return depth_; }
  [[nodiscard]] Entanglement entanglement() const { return entanglement_; }
  [[nodiscard]] std::size_t size() const { return angles_.size(); }

  [[nodiscard]] static std::size_t index(int n_qubits, int layer, int wire, int axis) {
    return (static_cast<std::size_t>(layer) * static_cast<std::size_t>(n_qubits) +
            static_cast<std::size_t>(wire)) * 3 + static_cast<std::size_t>(axis);
  }

  double& at(int layer, int wire, int axis) { return angles_[index(n_qubits_, layer, wire, axis)]; }
  [[nodiscard]] double at(int layer, int wire, int axis) const {
    return angles_[index(n_qubits_, layer, wire, axis)];
  }

  [[nodiscard]] std::span<const double> angles() const { return angles_; }
  std::span<double> angles() { return angles_; }
  /// Angles of one layer: n_qubits * 3 values.
  [[nodiscard]] std::span<const double> layer(int l) const;

 private:
  int n_qubits_ = 0;
  int depth_ = 0;
  Entanglement entanglement_ = Entanglement::Linear;
  std::vector<double> angles_;
};

/// H then RY(angle(x_i)) on every wire of a fresh register.
sv::StateVector encode(std::span<const double> features, const EncodingSpec& spec);

/// Entangling CNOT chain followed by RX(a), RY(b), RZ(c) on each wire.
sv::StateVector variational_layer(sv::StateVector state, std::span<const double> layer_angles,
                                  Entanglement entanglement = Entanglement::Linear);

/// Expectations (<Z_0>, ..., <Z_{n-1}>) after encoding and all layers.
std::vector<double> forward(std::span<const double> features, const QvcParams& params,
                            const EncodingSpec& spec);

/// Exact gradient of upstream . z with respect to every circuit angle,
/// by the +-pi/2 shift rule. Shaped like params.angles().
std::vector<double> param_shift_gradient(std::span<const double> features, const QvcParams& params,
                                         const EncodingSpec& spec,
                                         std::span<const double> upstream);

enum class DifferenceScheme { Forward, Central };

/// (L(theta + h) - L(theta)) / h per angle, or the central variant, where
/// L = upstream . z. Throws ConfigError unless h > 0.
std::vector<double> finite_difference_gradient(std::span<const double> features,
                                               const QvcParams& params, const EncodingSpec& spec,
                                               std::span<const double> upstream, double h,
                                               DifferenceScheme scheme = DifferenceScheme::Forward);

/// Gradient of upstream . z with respect to the raw features.
std::vector<double> input_gradient(std::span<const double> features, const QvcParams& params,
                                   const EncodingSpec& spec, std::span<const double> upstream);

struct Vjp {
  std::vector<double> input_grad;  ///< empty unless requested
  std::vector<double> param_grad;  ///< empty unless requested
};

/// input_gradient and param_shift_gradient from one shared prefix pass.
Vjp backward(std::span<const double> features, const QvcParams& params, const EncodingSpec& spec,
             std::span<const double> upstream, bool want_input_grad, bool want_param_grad);

/// Gate list of the full circuit (encoding followed by `depth` layers).
std::vector<sv::Gate> circuit_gates(std::span<const double> features, const QvcParams& params,
                                    const EncodingSpec& spec);

}  // namespace qtl::qvc
