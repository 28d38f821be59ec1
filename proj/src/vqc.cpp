#include "qmarl/vqc.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qmarl::vqc {

using qsim::GateKind;

CircuitTemplate CircuitTemplate::layered(int n_qubits, int n_layers, Encoding encoding) {
  qsim::StateVector::check_qubits(n_qubits);
  if (n_layers < 1) throw ConfigError("circuit needs at least one layer, got " + std::to_string(n_layers));

  CircuitTemplate t;
  t.n_qubits_ = n_qubits;
  t.n_layers_ = n_layers;
  t.encoding_ = encoding;
  t.encoding_slots_ = encoding == Encoding::Dense ? 2 * n_qubits : n_qubits;
  t.param_slots_ = 3 * n_qubits * n_layers;

  for (int w = 0; w < n_qubits; ++w) {
    t.plan_.push_back({GateKind::RY, w, -1, SlotSource::Encoding, w});
    if (encoding == Encoding::Dense) t.plan_.push_back({GateKind::RZ, w, -1, SlotSource::Encoding, n_qubits + w});
  }
  int slot = 0;
  for (int layer = 0; layer < n_layers; ++layer) {
    for (int w = 0; w < n_qubits; ++w) {
      t.plan_.push_back({GateKind::RX, w, -1, SlotSource::Parameter, slot++});
      t.plan_.push_back({GateKind::RY, w, -1, SlotSource::Parameter, slot++});
      t.plan_.push_back({GateKind::RZ, w, -1, SlotSource::Parameter, slot++});
    }
    if (n_qubits >= 2) {
      for (int w = 0; w < n_qubits; ++w) {
        const int target = (w + 1) % n_qubits;
        t.plan_.push_back({GateKind::CNOT, target, w, SlotSource::Fixed, -1});
      }
    }
  }
  return t;
}

Pvm pvm_for_actions(int action_dim) {
  if (action_dim < 2 || (action_dim & (action_dim - 1)) != 0)
    throw ConfigError("PVM readout needs a power-of-two action count, got " + std::to_string(action_dim));
  Pvm p;
  for (int bits = 0; (1 << bits) < action_dim; ++bits) p.wires.push_back(bits);
  return p;
}

ActionDistribution::ActionDistribution(Eigen::VectorXd probabilities) : probs_(std::move(probabilities)) {
  if (probs_.size() == 0) throw DimensionError("empty action distribution");
}

double ActionDistribution::probability(int action) const {
  if (action < 0 || action >= action_dim()) throw ActionError("action " + std::to_string(action) + " out of range");
  return probs_(action);
}

double ActionDistribution::log_prob(int action) const { return std::log(probability(action)); }

int ActionDistribution::sample(Rng& rng) const {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (Eigen::Index a = 0; a < probs_.size(); ++a) {
    acc += probs_(a);
    if (u < acc) return static_cast<int>(a);
  }
  // Rounding left u above the final partial sum; take the last supported action.
  for (Eigen::Index a = probs_.size() - 1; a >= 0; --a)
    if (probs_(a) > 0) return static_cast<int>(a);
  return 0;
}

std::vector<qsim::Gate> encode_observation(std::span<const double> obs, int n_qubits) {
  qsim::StateVector::check_qubits(n_qubits);
  if (static_cast<int>(obs.size()) > n_qubits)
    throw DimensionError("observation length " + std::to_string(obs.size()) + " exceeds " +
                         std::to_string(n_qubits) + " qubits");
  std::vector<qsim::Gate> gates;
  gates.reserve(static_cast<std::size_t>(n_qubits));
  for (int w = 0; w < n_qubits; ++w) {
    const double x = w < static_cast<int>(obs.size()) ? obs[static_cast<std::size_t>(w)] : 0.0;
    if (!std::isfinite(x)) throw DataError("non-finite observation entry at " + std::to_string(w));
    gates.push_back(qsim::Gate::ry(w, 2.0 * std::atan(x)));
  }
  return gates;
}

std::vector<qsim::Gate> encode_observation(const Observation& obs, int n_qubits) {
  return encode_observation(std::span<const double>(obs.data(), static_cast<std::size_t>(obs.size())), n_qubits);
}

Eigen::VectorXd encoding_angles(const CircuitTemplate& tmpl, const Observation& obs) {
  if (obs.size() > tmpl.input_capacity())
    throw DimensionError("input length " + std::to_string(obs.size()) + " exceeds encoding capacity " +
                         std::to_string(tmpl.input_capacity()));
  Eigen::VectorXd angles = Eigen::VectorXd::Zero(tmpl.encoding_slots());
  for (Eigen::Index i = 0; i < obs.size(); ++i) {
    if (!std::isfinite(obs(i))) throw DataError("non-finite input entry at " + std::to_string(i));
    angles(i) = 2.0 * std::atan(obs(i));
  }
  return angles;
}

void check_params(const CircuitTemplate& tmpl, const ParamVector& params) {
  if (params.size() != tmpl.param_slots())
    throw DimensionError("parameter vector has " + std::to_string(params.size()) + " entries, template needs " +
                         std::to_string(tmpl.param_slots()));
  if (!params.allFinite()) throw DataError("non-finite circuit parameter");
}

std::vector<qsim::Gate> bind(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs) {
  check_params(tmpl, params);
  const Eigen::VectorXd angles = encoding_angles(tmpl, obs);
  std::vector<qsim::Gate> gates;
  gates.reserve(tmpl.plan().size());
  for (const auto& e : tmpl.plan()) {
    switch (e.source) {
      case SlotSource::Encoding:
        gates.push_back({e.kind, e.target, std::nullopt, angles(e.slot)});
        break;
      case SlotSource::Parameter:
        gates.push_back({e.kind, e.target, std::nullopt, params(e.slot)});
        break;
      case SlotSource::Fixed:
        gates.push_back(qsim::Gate::cnot(e.control, e.target));
        break;
    }
  }
  return gates;
}

void simulate_into(const CircuitTemplate& tmpl, const ParamVector& params, const Eigen::VectorXd& angles,
                   qsim::Amplitudes<double>& out) {
  const int n = tmpl.n_qubits();
  out.setZero(Eigen::Index{1} << n);
  out(0) = 1.0;
  for (const auto& e : tmpl.plan()) {
    const double theta = e.source == SlotSource::Encoding    ? angles(e.slot)
                         : e.source == SlotSource::Parameter ? params(e.slot)
                                                             : 0.0;
    qsim::apply_gate_unchecked<double>(out, n, e.kind, e.target, e.control, theta);
  }
}

qsim::StateVector simulate(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs) {
  const auto gates = bind(tmpl, params, obs);
  return qsim::run_circuit(qsim::zero_state(tmpl.n_qubits()), gates);
}

void check_readout(const CircuitTemplate& tmpl, const ReadoutMode& readout, int action_dim) {
  if (action_dim < 1) throw ConfigError("action_dim must be positive");
  if (const auto* soft = std::get_if<ExpectationSoftmax>(&readout)) {
    if (action_dim > tmpl.n_qubits())
      throw ConfigError("softmax readout needs action_dim <= n_qubits (" + std::to_string(action_dim) + " > " +
                        std::to_string(tmpl.n_qubits()) + ")");
    if (!std::isfinite(soft->beta)) throw ConfigError("softmax beta must be finite");
    return;
  }
  const auto& pvm = std::get<Pvm>(readout);
  try {
    qsim::validate_wire_subset(pvm.wires, tmpl.n_qubits());
  } catch (const WireError& e) {
    throw ConfigError(std::string("PVM wires: ") + e.what());
  }
  if (pvm.wires.size() >= 31 || (std::int64_t{1} << pvm.wires.size()) != action_dim)
    throw ConfigError("PVM over " + std::to_string(pvm.wires.size()) + " wires yields 2^" +
                      std::to_string(pvm.wires.size()) + " outcomes, action_dim is " + std::to_string(action_dim));
}

Eigen::VectorXd floor_and_renormalize(const Eigen::VectorXd& p) {
  const double a = static_cast<double>(p.size());
  return (p.array() + kEpsilonFloor) / (1.0 + a * kEpsilonFloor);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::ArrayXd shifted = (logits.array() - logits.maxCoeff()).exp();
  return (shifted / shifted.sum()).matrix();
}

ActionDistribution actor_forward(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs,
                                 const ReadoutMode& readout, int action_dim) {
  check_readout(tmpl, readout, action_dim);
  check_params(tmpl, params);
  qsim::Amplitudes<double> amps;
  simulate_into(tmpl, params, encoding_angles(tmpl, obs), amps);

  Eigen::VectorXd raw;
  if (const auto* soft = std::get_if<ExpectationSoftmax>(&readout)) {
    Eigen::VectorXd z(action_dim);
    for (int k = 0; k < action_dim; ++k) z(k) = qsim::expectation_z(amps, tmpl.n_qubits(), k);
    raw = softmax(soft->beta * z);
  } else {
    raw = qsim::basis_probabilities(amps, tmpl.n_qubits(), std::span<const int>(std::get<Pvm>(readout).wires));
    // Clamp rounding residue so the floor keeps every entry positive.
    raw = raw.cwiseMax(0.0);
    raw /= raw.sum();
  }
  return ActionDistribution(floor_and_renormalize(raw));
}

double critic_forward(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& summary,
                      double v_scale) {
  check_params(tmpl, params);
  if (!std::isfinite(v_scale)) throw DataError("non-finite value scale");
  qsim::Amplitudes<double> amps;
  simulate_into(tmpl, params, encoding_angles(tmpl, summary), amps);
  return v_scale * qsim::expectation_z(amps, tmpl.n_qubits(), 0);
}

Eigen::VectorXd joint_summary(std::span<const Observation> observations) {
  if (observations.empty()) throw DimensionError("joint summary needs at least one agent");
  const Eigen::Index m = observations.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd max = observations.front();
  for (const auto& o : observations) {
    if (o.size() != m) throw DimensionError("ragged observations in joint summary");
    mean += o;
    max = max.cwiseMax(o);
  }
  mean /= static_cast<double>(observations.size());
  Eigen::VectorXd out(2 * m);
  out << mean, max;
  return out;
}

int param_count(const CircuitTemplate& tmpl) { return tmpl.param_slots(); }

ParamVector init_params(const CircuitTemplate& tmpl, Rng& rng) {
  ParamVector p(tmpl.param_slots());
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = uniform(rng, -kInitHalfWidth, kInitHalfWidth);
  return p;
}

}  // namespace qmarl::vqc
