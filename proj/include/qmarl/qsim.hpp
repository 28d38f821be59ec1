#pragma once

// Exact statevector simulation for few-qubit circuits built from
// RX, RY, RZ and CNOT.
//
// Basis ordering: basis index k stores wire 0 in its most significant bit,
// so for n qubits wire w corresponds to bit (n - 1 - w) of k.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qmarl/error.hpp"

namespace qmarl::qsim {

inline constexpr int kMaxQubits = 16;
inline constexpr int kMaxOracleQubits = 4;

enum class GateKind { RX, RY, RZ, CNOT };

inline const char* to_string(GateKind kind) {
  switch (kind) {
    case GateKind::RX: return "RX";
    case GateKind::RY: return "RY";
    case GateKind::RZ: return "RZ";
    case GateKind::CNOT: return "CNOT";
  }
  return "?";
}

struct Gate {
  GateKind kind = GateKind::RX;
  int target = 0;
  std::optional<int> control;
  std::optional<double> angle;

  static Gate rx(int wire, double theta) { return {GateKind::RX, wire, std::nullopt, theta}; }
  static Gate ry(int wire, double theta) { return {GateKind::RY, wire, std::nullopt, theta}; }
  static Gate rz(int wire, double theta) { return {GateKind::RZ, wire, std::nullopt, theta}; }
  static Gate cnot(int control, int target) { return {GateKind::CNOT, target, control, std::nullopt}; }

  bool is_rotation() const { return kind != GateKind::CNOT; }
};

template <typename Scalar>
using Amplitudes = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

template <typename Scalar>
using DenseUnitary = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

/// Normalized complex amplitudes over the 2^n computational basis states.
template <typename Scalar>
class BasicStateVector {
 public:
  using Complex = std::complex<Scalar>;

  static BasicStateVector zero(int n_qubits) {
    check_qubits(n_qubits);
    BasicStateVector s;
    s.n_qubits_ = n_qubits;
    s.amps_ = Amplitudes<Scalar>::Zero(Eigen::Index{1} << n_qubits);
    s.amps_(0) = Complex(1, 0);
    return s;
  }

  static BasicStateVector basis(int n_qubits, std::uint64_t index) {
    BasicStateVector s = zero(n_qubits);
    if (index >= static_cast<std::uint64_t>(s.amps_.size()))
      throw SizeError("basis index " + std::to_string(index) + " out of range");
    s.amps_(0) = Complex(0, 0);
    s.amps_(static_cast<Eigen::Index>(index)) = Complex(1, 0);
    return s;
  }

  /// Wraps caller-provided amplitudes; rejects wrong lengths and norms.
  static BasicStateVector from_amplitudes(Amplitudes<Scalar> amps, Scalar tolerance = Scalar(1e-10)) {
    const auto dim = amps.size();
    int n = 0;
    while ((Eigen::Index{1} << n) < dim) ++n;
    if (dim < 2 || (Eigen::Index{1} << n) != dim) throw SizeError("amplitude count must be a power of two >= 2");
    check_qubits(n);
    if (std::abs(amps.squaredNorm() - Scalar(1)) > tolerance) throw SizeError("amplitudes are not normalized");
    BasicStateVector s;
    s.n_qubits_ = n;
    s.amps_ = std::move(amps);
    return s;
  }

  int n_qubits() const { return n_qubits_; }
  Eigen::Index dimension() const { return amps_.size(); }
  const Amplitudes<Scalar>& amplitudes() const { return amps_; }
  Amplitudes<Scalar>& mutable_amplitudes() { return amps_; }
  Scalar norm() const { return amps_.norm(); }

  static void check_qubits(int n_qubits) {
    if (n_qubits < 1 || n_qubits > kMaxQubits)
      throw SizeError("qubit count " + std::to_string(n_qubits) + " outside [1, " +
                      std::to_string(kMaxQubits) + "]");
  }

 private:
  int n_qubits_ = 0;
  Amplitudes<Scalar> amps_;
};

using StateVector = BasicStateVector<double>;

inline StateVector zero_state(int n_qubits) { return StateVector::zero(n_qubits); }

namespace detail {

inline void check_wire(int wire, int n_qubits, const char* role) {
  if (wire < 0 || wire >= n_qubits)
    throw WireError(std::string(role) + " wire " + std::to_string(wire) + " invalid for " +
                    std::to_string(n_qubits) + " qubits");
}

inline std::uint64_t wire_mask(int wire, int n_qubits) {
  return std::uint64_t{1} << (n_qubits - 1 - wire);
}

template <typename Scalar>
struct Mat2 {
  std::complex<Scalar> a, b, c, d;  // [[a, b], [c, d]]
};

template <typename Scalar>
Mat2<Scalar> rotation_matrix(GateKind kind, Scalar theta) {
  using C = std::complex<Scalar>;
  const Scalar c = std::cos(theta / 2);
  const Scalar s = std::sin(theta / 2);
  switch (kind) {
    case GateKind::RX:
      return {C(c, 0), C(0, -s), C(0, -s), C(c, 0)};
    case GateKind::RY:
      return {C(c, 0), C(-s, 0), C(s, 0), C(c, 0)};
    case GateKind::RZ:
      return {C(c, -s), C(0, 0), C(0, 0), C(c, s)};
    case GateKind::CNOT:
      break;
  }
  throw WireError("CNOT has no single-qubit rotation matrix");
}

// Plain complex product; std::complex operator* goes through the slow
// NaN-recovering libgcc path.
template <typename Scalar>
inline std::complex<Scalar> cmul(const std::complex<Scalar>& x, const std::complex<Scalar>& y) {
  return {x.real() * y.real() - x.imag() * y.imag(), x.real() * y.imag() + x.imag() * y.real()};
}

// Calls f(lo, hi) for every amplitude pair differing only in `mask`.
template <typename Scalar, typename F>
inline void for_each_pair(Amplitudes<Scalar>& amps, std::uint64_t mask, F&& f) {
  const auto dim = static_cast<std::uint64_t>(amps.size());
  auto* data = amps.data();
  for (std::uint64_t hi = 0; hi < dim; hi += 2 * mask)
    for (std::uint64_t i = hi; i < hi + mask; ++i) f(data[i], data[i | mask]);
}

template <typename Scalar>
void apply_single(Amplitudes<Scalar>& amps, int n_qubits, int wire, const Mat2<Scalar>& m) {
  for_each_pair(amps, wire_mask(wire, n_qubits), [&](std::complex<Scalar>& x0, std::complex<Scalar>& x1) {
    const auto a0 = x0, a1 = x1;
    x0 = cmul(m.a, a0) + cmul(m.b, a1);
    x1 = cmul(m.c, a0) + cmul(m.d, a1);
  });
}

template <typename Scalar>
void apply_rx(Amplitudes<Scalar>& amps, int n_qubits, int wire, Scalar theta) {
  const Scalar c = std::cos(theta / 2), s = std::sin(theta / 2);
  // [[c, -is], [-is, c]]
  for_each_pair(amps, wire_mask(wire, n_qubits), [&](std::complex<Scalar>& x0, std::complex<Scalar>& x1) {
    const auto a0 = x0, a1 = x1;
    x0 = {c * a0.real() + s * a1.imag(), c * a0.imag() - s * a1.real()};
    x1 = {c * a1.real() + s * a0.imag(), c * a1.imag() - s * a0.real()};
  });
}

template <typename Scalar>
void apply_ry(Amplitudes<Scalar>& amps, int n_qubits, int wire, Scalar theta) {
  const Scalar c = std::cos(theta / 2), s = std::sin(theta / 2);
  for_each_pair(amps, wire_mask(wire, n_qubits), [&](std::complex<Scalar>& x0, std::complex<Scalar>& x1) {
    const auto a0 = x0, a1 = x1;
    x0 = {c * a0.real() - s * a1.real(), c * a0.imag() - s * a1.imag()};
    x1 = {s * a0.real() + c * a1.real(), s * a0.imag() + c * a1.imag()};
  });
}

template <typename Scalar>
void apply_diagonal_rz(Amplitudes<Scalar>& amps, int n_qubits, int wire, Scalar theta) {
  const std::complex<Scalar> p0 = std::polar(Scalar(1), -theta / 2);
  const std::complex<Scalar> p1 = std::polar(Scalar(1), theta / 2);
  for_each_pair(amps, wire_mask(wire, n_qubits), [&](std::complex<Scalar>& x0, std::complex<Scalar>& x1) {
    x0 = cmul(x0, p0);
    x1 = cmul(x1, p1);
  });
}

template <typename Scalar>
void apply_cnot(Amplitudes<Scalar>& amps, int n_qubits, int control, int target) {
  const std::uint64_t cmask = wire_mask(control, n_qubits);
  const std::uint64_t tmask = wire_mask(target, n_qubits);
  auto* data = amps.data();
  const auto dim = static_cast<std::uint64_t>(amps.size());
  for (std::uint64_t hi = 0; hi < dim; hi += 2 * tmask)
    for (std::uint64_t i = hi; i < hi + tmask; ++i)
      if (i & cmask) std::swap(data[i], data[i | tmask]);
}

}  // namespace detail

inline void validate_gate(const Gate& gate, int n_qubits) {
  detail::check_wire(gate.target, n_qubits, "target");
  if (gate.kind == GateKind::CNOT) {
    if (!gate.control) throw WireError("CNOT requires a control wire");
    detail::check_wire(*gate.control, n_qubits, "control");
    if (*gate.control == gate.target) throw WireError("CNOT control and target coincide");
    if (gate.angle) throw WireError("CNOT takes no angle");
  } else {
    if (gate.control) throw WireError(std::string(to_string(gate.kind)) + " takes no control wire");
    if (!gate.angle) throw WireError(std::string(to_string(gate.kind)) + " requires an angle");
  }
}

/// Applies `gate` to raw amplitudes in place. Wires are not validated.
template <typename Scalar>
void apply_gate_unchecked(Amplitudes<Scalar>& amps, int n_qubits, GateKind kind, int target, int control,
                          Scalar theta) {
  switch (kind) {
    case GateKind::CNOT:
      detail::apply_cnot(amps, n_qubits, control, target);
      return;
    case GateKind::RZ:
      detail::apply_diagonal_rz(amps, n_qubits, target, theta);
      return;
    case GateKind::RX:
      detail::apply_rx(amps, n_qubits, target, theta);
      return;
    case GateKind::RY:
      detail::apply_ry(amps, n_qubits, target, theta);
      return;
  }
}

template <typename Scalar>
void apply_gate_inplace(BasicStateVector<Scalar>& state, const Gate& gate) {
  validate_gate(gate, state.n_qubits());
  apply_gate_unchecked<Scalar>(state.mutable_amplitudes(), state.n_qubits(), gate.kind, gate.target,
                               gate.control.value_or(-1), static_cast<Scalar>(gate.angle.value_or(0)));
}

template <typename Scalar>
BasicStateVector<Scalar> apply_gate(BasicStateVector<Scalar> state, const Gate& gate) {
  apply_gate_inplace(state, gate);
  return state;
}

template <typename Scalar>
void run_circuit_inplace(BasicStateVector<Scalar>& state, std::span<const Gate> gates) {
  for (std::size_t i = 0; i < gates.size(); ++i) {
    try {
      validate_gate(gates[i], state.n_qubits());
    } catch (const WireError& e) {
      throw WireError("gate #" + std::to_string(i) + ": " + e.what());
    }
  }
  for (const auto& g : gates) {
    apply_gate_unchecked<Scalar>(state.mutable_amplitudes(), state.n_qubits(), g.kind, g.target,
                                 g.control.value_or(-1), static_cast<Scalar>(g.angle.value_or(0)));
  }
}

template <typename Scalar>
BasicStateVector<Scalar> run_circuit(BasicStateVector<Scalar> state, std::span<const Gate> gates) {
  run_circuit_inplace(state, gates);
  return state;
}

/// <Z> on `wire` computed directly from amplitudes.
template <typename Scalar>
Scalar expectation_z(const Amplitudes<Scalar>& amps, int n_qubits, int wire) {
  const std::uint64_t mask = detail::wire_mask(wire, n_qubits);
  Scalar acc = 0;
  const auto dim = static_cast<std::uint64_t>(amps.size());
  for (std::uint64_t i = 0; i < dim; ++i) {
    const Scalar p = std::norm(amps.data()[i]);
    acc += (i & mask) ? -p : p;
  }
  return acc;
}

template <typename Scalar>
Scalar expectation_z(const BasicStateVector<Scalar>& state, int wire) {
  detail::check_wire(wire, state.n_qubits(), "readout");
  return expectation_z(state.amplitudes(), state.n_qubits(), wire);
}

inline void validate_wire_subset(std::span<const int> wires, int n_qubits) {
  if (wires.empty()) throw WireError("wire subset is empty");
  std::vector<bool> seen(static_cast<std::size_t>(n_qubits), false);
  for (int w : wires) {
    detail::check_wire(w, n_qubits, "measured");
    if (seen[static_cast<std::size_t>(w)]) throw WireError("duplicate wire " + std::to_string(w) + " in subset");
    seen[static_cast<std::size_t>(w)] = true;
  }
}

/// Maps a full basis index to the bit pattern read on `wires`; the first
/// listed wire becomes the most significant bit of the pattern.
inline std::uint64_t pattern_of(std::uint64_t basis_index, std::span<const int> wires, int n_qubits) {
  std::uint64_t k = 0;
  for (int w : wires) k = (k << 1) | ((basis_index & detail::wire_mask(w, n_qubits)) ? 1u : 0u);
  return k;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> basis_probabilities(const Amplitudes<Scalar>& amps, int n_qubits,
                                                             std::span<const int> wires) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> probs =
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(Eigen::Index{1} << wires.size());
  const auto dim = static_cast<std::uint64_t>(amps.size());
  bool identity_layout = static_cast<int>(wires.size()) == n_qubits;
  for (std::size_t i = 0; identity_layout && i < wires.size(); ++i) identity_layout = wires[i] == static_cast<int>(i);
  if (identity_layout) return amps.cwiseAbs2();
  for (std::uint64_t i = 0; i < dim; ++i)
    probs(static_cast<Eigen::Index>(pattern_of(i, wires, n_qubits))) += std::norm(amps.data()[i]);
  return probs;
}

/// Marginal probabilities of every bit pattern on `wires` (the PVM readout).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> basis_probabilities(const BasicStateVector<Scalar>& state,
                                                             std::span<const int> wires) {
  validate_wire_subset(wires, state.n_qubits());
  return basis_probabilities(state.amplitudes(), state.n_qubits(), wires);
}

/// Dense 2^n x 2^n matrix of a single gate; only for small n.
template <typename Scalar>
DenseUnitary<Scalar> gate_matrix(const Gate& gate, int n_qubits) {
  validate_gate(gate, n_qubits);
  const Eigen::Index dim = Eigen::Index{1} << n_qubits;
  DenseUnitary<Scalar> m = DenseUnitary<Scalar>::Zero(dim, dim);
  const std::uint64_t tmask = detail::wire_mask(gate.target, n_qubits);
  if (gate.kind == GateKind::CNOT) {
    const std::uint64_t cmask = detail::wire_mask(*gate.control, n_qubits);
    for (std::uint64_t col = 0; col < static_cast<std::uint64_t>(dim); ++col) {
      const std::uint64_t row = (col & cmask) ? (col ^ tmask) : col;
      m(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = 1;
    }
    return m;
  }
  const auto r = detail::rotation_matrix<Scalar>(gate.kind, static_cast<Scalar>(*gate.angle));
  for (std::uint64_t col = 0; col < static_cast<std::uint64_t>(dim); ++col) {
    const std::uint64_t c0 = col & ~tmask;
    const std::uint64_t c1 = col | tmask;
    const bool bit = (col & tmask) != 0;
    // Column `col` holds the image of basis state |col>.
    m(static_cast<Eigen::Index>(c0), static_cast<Eigen::Index>(col)) = bit ? r.b : r.a;
    m(static_cast<Eigen::Index>(c1), static_cast<Eigen::Index>(col)) = bit ? r.d : r.c;
  }
  return m;
}

/// Explicit product of per-gate dense matrices. Test oracle for run_circuit.
template <typename Scalar = double>
DenseUnitary<Scalar> dense_unitary_oracle(std::span<const Gate> gates, int n_qubits) {
  if (n_qubits < 1 || n_qubits > kMaxOracleQubits)
    throw SizeError("dense oracle limited to 1.." + std::to_string(kMaxOracleQubits) + " qubits");
  const Eigen::Index dim = Eigen::Index{1} << n_qubits;
  DenseUnitary<Scalar> u = DenseUnitary<Scalar>::Identity(dim, dim);
  for (const auto& g : gates) u = gate_matrix<Scalar>(g, n_qubits) * u;
  return u;
}

}  // namespace qmarl::qsim
