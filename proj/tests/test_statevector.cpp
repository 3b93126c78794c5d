#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "qtl/check.hpp"
#include "qtl/error.hpp"
#include "qtl/statevector.hpp"

using namespace qtl;
using sv::Gate;

namespace {

std::vector<Gate> random_circuit(std::mt19937_64& rng, int n, int count) {
  std::uniform_int_distribution<int> kind(0, n > 1 ? 4 : 3);
  std::uniform_int_distribution<int> wire(0, n - 1);
  std::uniform_real_distribution<double> angle(-2 * std::numbers::pi, 2 * std::numbers::pi);
  std::vector<Gate> gates;
  for (int i = 0; i < count; ++i) {
    switch (kind(rng)) {
      case 0: gates.push_back(Gate::h(wire(rng))); break;
      case 1: gates.push_back(Gate::rx(wire(rng), angle(rng))); break;
      case 2: gates.push_back(Gate::ry(wire(rng), angle(rng))); break;
      case 3: gates.push_back(Gate::rz(wire(rng), angle(rng))); break;
      default: {
        const int c = wire(rng);
        int t = wire(rng);
        while (t == c) t = wire(rng);
        gates.push_back(Gate::cnot(c, t));
      }
    }
  }
  return gates;
}

}  // namespace

TEST_CASE("init_state") {
  const auto s1 = sv::init_state(1);
  CHECK(s1.dim() == 2);
  CHECK(s1[0] == sv::Amplitude(1, 0));
  CHECK(s1[1] == sv::Amplitude(0, 0));
  const auto s2 = sv::init_state(2);
  CHECK(s2.dim() == 4);
  CHECK(s2[0] == sv::Amplitude(1, 0));
  for (std::size_t i = 1; i < 4; ++i) CHECK(s2[i] == sv::Amplitude(0, 0));
  CHECK_THROWS_AS(sv::init_state(13), ConfigError);
  CHECK_THROWS_AS(sv::init_state(0), ConfigError);
}

TEST_CASE("single gates on basis states") {
  const auto h = sv::apply_gate(sv::init_state(1), Gate::h(0));
  CHECK(std::abs(h[0] - 1 / std::sqrt(2.0)) < 1e-15);
  CHECK(std::abs(h[1] - 1 / std::sqrt(2.0)) < 1e-15);

  const auto ry = sv::apply_gate(sv::init_state(1), Gate::ry(0, std::numbers::pi));
  CHECK(std::abs(ry[0]) < 1e-15);
  CHECK(std::abs(ry[1] - 1.0) < 1e-15);

  // qubit 0 set is basis index 1
  const auto flipped = sv::apply_gate(sv::StateVector::basis(2, 1), Gate::cnot(0, 1));
  CHECK(flipped[3] == sv::Amplitude(1, 0));
  CHECK(std::abs(flipped[0]) + std::abs(flipped[1]) + std::abs(flipped[2]) == 0.0);
}

TEST_CASE("rotation matrices follow exp(-i theta P / 2)") {
  const double t = 0.37, c = std::cos(t / 2), s = std::sin(t / 2);
  const auto ry = sv::gate_matrix(Gate::ry(0, t));
  CHECK(std::abs(ry[0] - c) < 1e-15);
  CHECK(std::abs(ry[1] + s) < 1e-15);
  CHECK(std::abs(ry[2] - s) < 1e-15);
  const auto rx = sv::gate_matrix(Gate::rx(0, t));
  CHECK(std::abs(rx[1] - sv::Amplitude(0, -s)) < 1e-15);
  const auto rz = sv::gate_matrix(Gate::rz(0, t));
  CHECK(std::abs(rz[0] - std::polar(1.0, -t / 2)) < 1e-15);
  CHECK(std::abs(rz[3] - std::polar(1.0, t / 2)) < 1e-15);
  CHECK_THROWS_AS(sv::gate_matrix(Gate::cnot(0, 1)), UsageError);
}

TEST_CASE("gate validation") {
  auto s = sv::init_state(2);
  CHECK_THROWS_AS(s.apply(Gate::h(2)), ConfigError);
  CHECK_THROWS_AS(s.apply(Gate::h(-1)), ConfigError);
  CHECK_THROWS_AS(s.apply(Gate::cnot(1, 1)), ConfigError);
  CHECK_THROWS_AS(s.apply(Gate::cnot(0, 5)), ConfigError);
  CHECK_THROWS_AS(sv::expectation_z(s, {2}), ConfigError);
}

TEST_CASE("from_amplitudes checks length and norm") {
  CHECK_THROWS_AS(sv::StateVector::from_amplitudes(2, {1, 0, 0}), ShapeError);
  CHECK_THROWS_AS(sv::StateVector::from_amplitudes(1, {1, 1}), ConfigError);
  const double r = 1 / std::sqrt(2.0);
  CHECK_NOTHROW(sv::StateVector::from_amplitudes(1, {r, sv::Amplitude(0, r)}));
}

TEST_CASE("expectation_z examples") {
  CHECK(sv::expectation_z(sv::init_state(1), {0}) == 1.0);
  CHECK(std::abs(sv::expectation_z(sv::apply_gate(sv::init_state(1), Gate::h(0)), {0})) < 1e-15);
  const std::vector<Gate> gates{Gate::ry(0, 0.7)};
  const auto dense = check::run_dense(1, gates);
  const double want = check::dense_expectation_z(dense, 0);
  CHECK(std::abs(want - std::cos(0.7)) < 1e-14);
  CHECK(std::abs(sv::expectation_z(sv::apply_gate(sv::init_state(1), gates[0]), {0}) - want) < 1e-14);
}

TEST_CASE("random circuits match the dense oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 3;
    const auto gates = random_circuit(rng, n, 10);
    auto state = sv::init_state(n);
    for (const auto& g : gates) state = sv::apply_gate(std::move(state), g);
    const auto dense = check::run_dense(n, gates);
    CHECK(check::max_abs_diff(state.amplitudes(), dense) <= 1e-10);
    for (int w = 0; w < n; ++w) {
      CHECK(std::abs(sv::expectation_z(state, {w}) - check::dense_expectation_z(dense, w)) <= 1e-10);
    }
  }
}

TEST_CASE("norm survives 1000 gates") {
  std::mt19937_64 rng(5);
  for (int n = 1; n <= 6; ++n) {
    auto state = sv::init_state(n);
    for (const auto& g : random_circuit(rng, n, 1000)) state.apply(g);
    CHECK(std::abs(state.norm_squared() - 1.0) <= 1e-9);
  }
}

TEST_CASE("gate followed by its inverse is the identity") {
  std::mt19937_64 rng(9);
  auto state = sv::init_state(4);
  for (const auto& g : random_circuit(rng, 4, 30)) state.apply(g);
  for (const auto& g : random_circuit(rng, 4, 50)) {
    const auto back = sv::apply_gate(sv::apply_gate(state, g), g.inverse());
    CHECK(check::max_abs_diff(back.amplitudes(), state.amplitudes()) <= 1e-12);
  }
}

TEST_CASE("expectation stays in [-1, 1]") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto state = sv::init_state(5);
    for (const auto& g : random_circuit(rng, 5, 40)) state.apply(g);
    for (double z : sv::expectation_z_all(state)) {
      CHECK(z >= -1 - 1e-12);
      CHECK(z <= 1 + 1e-12);
    }
  }
}

TEST_CASE("dense oracle sanity: CNOT unitary is a permutation") {
  const auto u = check::full_unitary(Gate::cnot(0, 1), 2);
  // |01> (index 1) -> |11> (index 3)
  CHECK(u(3, 1) == check::Amplitude(1, 0));
  CHECK(u(1, 3) == check::Amplitude(1, 0));
  CHECK(u(0, 0) == check::Amplitude(1, 0));
  CHECK(u(2, 2) == check::Amplitude(1, 0));
}
