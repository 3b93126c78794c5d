#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "qtl/check.hpp"
#include "qtl/error.hpp"
#include "qtl/qvc.hpp"

using namespace qtl;
using sv::Gate;

namespace {

std::vector<double> normals(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double dense_loss(std::span<const double> features, const qvc::QvcParams& p, const qvc::EncodingSpec& spec,
                  std::span<const double> upstream) {
  const auto psi = check::run_dense(p.n_qubits(), qvc::circuit_gates(features, p, spec));
  double l = 0.0;
  for (int w = 0; w < p.n_qubits(); ++w) l += upstream[static_cast<std::size_t>(w)] * check::dense_expectation_z(psi, w);
  return l;
}

}  // namespace

TEST_CASE("parameter count") {
  CHECK(qvc::QvcParams(6, 6).size() == 108);
  CHECK(qvc::QvcParams(4, 2).size() == 24);
}

TEST_CASE("encoding scale modes") {
  qvc::EncodingSpec tanh_mode;
  CHECK(tanh_mode.angle(0.0) == 0.0);
  CHECK(std::abs(tanh_mode.angle(0.5) - std::numbers::pi / 2 * std::tanh(0.5)) < 1e-15);
  qvc::EncodingSpec lin{qvc::ScaleMode::Linear, 2.0};
  CHECK(lin.angle(0.3) == 0.6);
  CHECK(lin.angle_derivative(7.0) == 2.0);
  for (double x : {-15.0, -3.0, -0.1, 0.0, 0.2, 4.0, 15.0}) {
    CHECK(std::abs(tanh_mode.angle(x)) < std::numbers::pi / 2);
  }
}

TEST_CASE("encode") {
  qvc::EncodingSpec spec;
  const std::vector<double> zeros(3, 0.0);
  const auto s = qvc::encode(zeros, spec);
  for (std::size_t i = 0; i < s.dim(); ++i) CHECK(std::abs(s[i] - 1 / std::sqrt(8.0)) < 1e-15);
  for (double z : sv::expectation_z_all(s)) CHECK(std::abs(z) < 1e-15);

  const std::vector<double> x{0.5};
  const std::vector<Gate> gates{Gate::h(0), Gate::ry(0, std::numbers::pi / 2 * std::tanh(0.5))};
  CHECK(check::max_abs_diff(qvc::encode(x, spec).amplitudes(), check::run_dense(1, gates)) < 1e-14);
}

TEST_CASE("encode and forward reject width mismatches") {
  qvc::QvcParams p(6, 1);
  const std::vector<double> five(5, 0.1);
  CHECK_THROWS_AS(qvc::forward(five, p, {}), ShapeError);
  const std::vector<double> bad_layer(5, 0.0);
  CHECK_THROWS_AS(qvc::variational_layer(sv::init_state(2), bad_layer), ShapeError);
}

TEST_CASE("variational layer") {
  auto plus = sv::apply_gate(sv::apply_gate(sv::init_state(2), Gate::h(0)), Gate::h(1));
  const std::vector<double> zero(6, 0.0);
  CHECK(check::max_abs_diff(qvc::variational_layer(plus, zero).amplitudes(), plus.amplitudes()) < 1e-15);

  const auto moved = qvc::variational_layer(sv::StateVector::basis(2, 1), zero);
  CHECK(std::abs(moved[3] - 1.0) < 1e-15);

  std::mt19937_64 rng(3);
  const auto angles = normals(rng, 6);
  const auto out = qvc::variational_layer(plus, angles);
  std::vector<Gate> gates{Gate::h(0), Gate::h(1), Gate::cnot(0, 1)};
  for (int w = 0; w < 2; ++w) {
    gates.push_back(Gate::rx(w, angles[w * 3]));
    gates.push_back(Gate::ry(w, angles[w * 3 + 1]));
    gates.push_back(Gate::rz(w, angles[w * 3 + 2]));
  }
  CHECK(check::max_abs_diff(out.amplitudes(), check::run_dense(2, gates)) < 1e-12);
}

TEST_CASE("ring entanglement adds the closing CNOT") {
  qvc::QvcParams ring(3, 1, qvc::Entanglement::Ring);
  const std::vector<double> x(3, 0.0);
  int cnots = 0;
  for (const auto& g : qvc::circuit_gates(x, ring, {})) cnots += g.kind == sv::GateKind::CNOT ? 1 : 0;
  CHECK(cnots == 3);
  qvc::QvcParams two(2, 1, qvc::Entanglement::Ring);
  cnots = 0;
  for (const auto& g : qvc::circuit_gates(std::vector<double>(2, 0.0), two, {})) cnots += g.kind == sv::GateKind::CNOT ? 1 : 0;
  CHECK(cnots == 1);
}

TEST_CASE("forward") {
  const std::vector<double> x(6, 0.0);
  for (double z : qvc::forward(x, qvc::QvcParams(6, 6), {})) CHECK(std::abs(z) < 1e-14);

  std::mt19937_64 rng(17);
  const auto p = qvc::QvcParams::random(2, 1, 1.0, rng);
  const auto feats = normals(rng, 2);
  const auto z = qvc::forward(feats, p, {});
  const auto psi = check::run_dense(2, qvc::circuit_gates(feats, p, {}));
  for (int w = 0; w < 2; ++w) CHECK(std::abs(z[static_cast<std::size_t>(w)] - check::dense_expectation_z(psi, w)) < 1e-12);

  const auto again = qvc::forward(feats, p, {});
  CHECK(again == z);
}

TEST_CASE("QvcParams::random uses the spread") {
  std::mt19937_64 a(1), b(1);
  const auto p = qvc::QvcParams::random(6, 6, 0.01, a);
  std::normal_distribution<double> d(0.0, 1.0);
  for (double v : p.angles()) CHECK(v == 0.01 * d(b));
}

TEST_CASE("param-shift gradient matches dense central differences") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 4, depth = 1 + trial % 3;
    const auto p = qvc::QvcParams::random(n, depth, 1.0, rng);
    const auto x = normals(rng, static_cast<std::size_t>(n));
    const auto up = normals(rng, static_cast<std::size_t>(n));
    const auto ps = qvc::param_shift_gradient(x, p, {}, up);
    const auto fd = check::qvc_dense_fd_gradient(x, p, {}, up, 1e-4);
    CHECK(check::max_abs_diff(ps, fd) <= 1e-6);
  }
}

TEST_CASE("param-shift special cases") {
  std::mt19937_64 rng(29);
  const auto p = qvc::QvcParams::random(3, 2, 1.0, rng);
  const auto x = normals(rng, 3);
  const std::vector<double> zero(3, 0.0);
  for (double g : qvc::param_shift_gradient(x, p, {}, zero)) CHECK(g == 0.0);

  // One qubit, one layer, only beta nonzero.
  qvc::QvcParams single(1, 1);
  single.at(0, 0, 1) = 0.4;
  const std::vector<double> xs{0.0};
  const std::vector<double> up{1.0};
  // H|0> has Bloch angle pi/2 about Y, so z = cos(pi/2 + beta) = -sin(beta)
  const auto z = qvc::forward(xs, single, {});
  CHECK(std::abs(z[0] + std::sin(0.4)) < 1e-14);
  const auto g = qvc::param_shift_gradient(xs, single, {}, up);
  CHECK(std::abs(g[1] + std::cos(0.4)) < 1e-14);
  CHECK(std::abs(g[0]) < 1e-14);
  CHECK(std::abs(g[2]) < 1e-14);
}

TEST_CASE("finite differences") {
  std::mt19937_64 rng(31);
  const auto p = qvc::QvcParams::random(3, 2, 1.0, rng);
  const auto x = normals(rng, 3);
  const auto up = normals(rng, 3);
  CHECK_THROWS_AS(qvc::finite_difference_gradient(x, p, {}, up, 0.0), ConfigError);
  CHECK_THROWS_AS(qvc::finite_difference_gradient(x, p, {}, up, -1e-3), ConfigError);

  const auto exact = qvc::param_shift_gradient(x, p, {}, up);
  const auto fwd = qvc::finite_difference_gradient(x, p, {}, up, 1e-5);
  CHECK(check::max_abs_diff(exact, fwd) < 1e-4);
  const auto cen = qvc::finite_difference_gradient(x, p, {}, up, 1e-4, qvc::DifferenceScheme::Central);
  CHECK(check::max_abs_diff(exact, cen) < 1e-7);

  // Forward difference error shrinks with h.
  const auto coarse = qvc::finite_difference_gradient(x, p, {}, up, 1e-2);
  CHECK(check::max_abs_diff(exact, fwd) < check::max_abs_diff(exact, coarse));

  // A circuit whose output ignores the parameters: zero upstream weights.
  const std::vector<double> zero(3, 0.0);
  for (double g : qvc::finite_difference_gradient(x, p, {}, zero, 1e-3)) CHECK(g == 0.0);
}

TEST_CASE("input gradient") {
  std::mt19937_64 rng(37);
  for (auto mode : {qvc::ScaleMode::TanhHalfPi, qvc::ScaleMode::Linear}) {
    const qvc::EncodingSpec spec{mode, 1.5};
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 1 + trial % 4;
      const auto p = qvc::QvcParams::random(n, 2, 1.0, rng);
      const auto x = normals(rng, static_cast<std::size_t>(n));
      const auto up = normals(rng, static_cast<std::size_t>(n));
      const auto g = qvc::input_gradient(x, p, spec, up);
      const auto fd = check::central_difference(
          [&](std::span<const double> xs) { return dense_loss(xs, p, spec, up); }, x, 1e-4);
      CHECK(check::max_abs_diff(g, fd) <= 1e-6);
    }
  }
  const auto p = qvc::QvcParams::random(2, 1, 1.0, rng);
  const std::vector<double> x{20.0, 0.3};
  const std::vector<double> up{1.0, 1.0};
  const auto g = qvc::input_gradient(x, p, {}, up);
  CHECK(std::abs(g[0]) <= 1e-15);
  for (double v : qvc::input_gradient(x, p, {}, std::vector<double>{0.0, 0.0})) CHECK(v == 0.0);
}

TEST_CASE("combined backward agrees with the separate calls") {
  std::mt19937_64 rng(41);
  const auto p = qvc::QvcParams::random(4, 3, 0.5, rng);
  const auto x = normals(rng, 4);
  const auto up = normals(rng, 4);
  const auto both = qvc::backward(x, p, {}, up, true, true);
  CHECK(check::max_abs_diff(both.param_grad, qvc::param_shift_gradient(x, p, {}, up)) < 1e-13);
  CHECK(check::max_abs_diff(both.input_grad, qvc::input_gradient(x, p, {}, up)) < 1e-13);
  const auto none = qvc::backward(x, p, {}, up, false, false);
  CHECK(none.input_grad.empty());
  CHECK(none.param_grad.empty());
}
