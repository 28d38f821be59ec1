#pragma once

#include <vector>

#include "qmarl/qsim.hpp"
#include "qmarl/rng.hpp"

namespace qmarl::testing {

inline qsim::Gate random_gate(Rng& rng, int n_qubits) {
  const int kinds = n_qubits >= 2 ? 4 : 3;
  const auto kind = static_cast<qsim::GateKind>(uniform_index(rng, kinds));
  const int target = static_cast<int>(uniform_index(rng, n_qubits));
  if (kind == qsim::GateKind::CNOT) {
    int control = static_cast<int>(uniform_index(rng, n_qubits - 1));
    if (control >= target) ++control;
    return qsim::Gate::cnot(control, target);
  }
  return {kind, target, std::nullopt, uniform(rng, -4.0, 4.0)};
}

inline std::vector<qsim::Gate> random_circuit(Rng& rng, int n_qubits, int n_gates) {
  std::vector<qsim::Gate> gates;
  for (int i = 0; i < n_gates; ++i) gates.push_back(random_gate(rng, n_qubits));
  return gates;
}

/// Haar-ish random input: normalized complex Gaussian amplitudes.
inline qsim::StateVector random_state(Rng& rng, int n_qubits) {
  qsim::Amplitudes<double> a(Eigen::Index{1} << n_qubits);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = {standard_normal(rng), standard_normal(rng)};
  a /= a.norm();
  return qsim::StateVector::from_amplitudes(a);
}

}  // namespace qmarl::testing
