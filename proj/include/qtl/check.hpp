#pragma once

// Reference implementations used by the tests and `qtl selftest`. Nothing
// here shares code paths with the fast kernels it is compared against.

#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qtl/layers.hpp"
#include "qtl/qvc.hpp"
#include "qtl/statevector.hpp"

namespace qtl::check {

using Amplitude = std::complex<double>;

/// Square complex matrix, row-major.
struct DenseMatrix {
  std::size_t dim = 0;
  std::vector<Amplitude> data;

  Amplitude& operator()(std::size_t r, std::size_t c) { return data[r * dim + c]; }
  [[nodiscard]] Amplitude operator()(std::size_t r, std::size_t c) const { return data[r * dim + c]; }
};

DenseMatrix identity(std::size_t dim);
DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
std::vector<Amplitude> matvec(const DenseMatrix& m, std::span<const Amplitude> v);

/// Full 2^n x 2^n unitary of one gate, assembled from Kronecker products
/// (qubit 0 is the rightmost factor).
DenseMatrix full_unitary(const sv::Gate& gate, int n_qubits);

/// `count` gates drawn uniformly from H, RX, RY, RZ and (for n > 1) CNOT,
/// with angles in [-2pi, 2pi].
std::vector<sv::Gate> random_circuit(std::mt19937_64& rng, int n_qubits, int count);

/// Applies the gates to |0...0> by dense matrix-vector products.
std::vector<Amplitude> run_dense(int n_qubits, std::span<const sv::Gate> gates);

/// <Z_wire> from dense amplitudes.
double dense_expectation_z(std::span<const Amplitude> amps, int wire);

double max_abs_diff(std::span<const Amplitude> a, std::span<const Amplitude> b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

/// Denominator floor for relative_error. Gradients that are exactly zero
/// (a conv bias feeding batch norm) are then compared in absolute terms.
inline constexpr double kRelativeErrorFloor = 1e-5;

/// ||a - b|| / max(||a||, ||b||, kRelativeErrorFloor).
double relative_error(std::span<const double> a, std::span<const double> b);

using ScalarFn = std::function<double(std::span<const double>)>;

/// (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
std::vector<double> central_difference(const ScalarFn& f, std::span<const double> x, double h);

/// Central-difference gradient of upstream . <Z> with respect to the circuit
/// angles, evaluated entirely with the dense simulator.
std::vector<double> qvc_dense_fd_gradient(std::span<const double> features, const qvc::QvcParams& params,
                                          const qvc::EncodingSpec& spec, std::span<const double> upstream,
                                          double h);

struct LayerCheck {
  double input_error = 0.0;
  std::vector<double> param_errors;

  [[nodiscard]] double worst() const;
};

/// Compares a layer's backward pass with central differences of
/// sum(w * forward(x)) for a fixed random w, over the input and every
/// parameter. Errors are relative_error per tensor.
LayerCheck check_layer_gradients(nn::Layer& layer, const Tensor& input, nn::Mode mode, double h,
                                 std::uint64_t seed);

struct NamedLayerCheck {
  std::string name;
  LayerCheck result;
};

/// check_layer_gradients over every layer kind on random small tensors:
/// dense, conv (strided/padded and plain), ReLU, max pool (disjoint and
/// overlapping windows), flatten, batch norm in train and eval mode, and
/// residual blocks with identity and projection shortcuts.
std::vector<NamedLayerCheck> layer_gradient_suite(double h, std::uint64_t seed);

}  // namespace qtl::check
