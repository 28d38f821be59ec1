#pragma once

// Variational circuit models: observation encoding, layered templates,
// actor/critic readouts and parameter accounting.

#include <Eigen/Dense>

#include <numbers>
#include <span>
#include <variant>
#include <vector>

#include "qmarl/qsim.hpp"
#include "qmarl/rng.hpp"

namespace qmarl::vqc {

using ParamVector = Eigen::VectorXd;
using Observation = Eigen::VectorXd;

/// Probability floor mixed into every policy before renormalization.
inline constexpr double kEpsilonFloor = 1e-6;
inline constexpr double kDefaultBeta = 5.0;
inline constexpr double kDefaultValueScale = 20.0;
inline constexpr double kInitHalfWidth = std::numbers::pi / 100.0;

/// Angle: one RY(2 atan x) per wire.
/// Dense: RY(2 atan x_i) then RZ(2 atan x_{n+i}) per wire, so n wires carry
/// up to 2n inputs. The centralized critic uses it for the mean/max summary.
enum class Encoding { Angle, Dense };

enum class SlotSource { Encoding, Parameter, Fixed };

struct PlanEntry {
  qsim::GateKind kind;
  int target;
  int control;  // -1 unless CNOT
  SlotSource source;
  int slot;  // index into the encoding angles or the parameter vector
};

/// Gate layout with angle slots, kept separate from the angle values.
class CircuitTemplate {
 public:
  /// Encoding block, then `n_layers` x (RX, RY, RZ on every wire, CNOT ring).
  static CircuitTemplate layered(int n_qubits, int n_layers, Encoding encoding = Encoding::Angle);

  int n_qubits() const { return n_qubits_; }
  int n_layers() const { return n_layers_; }
  Encoding encoding() const { return encoding_; }
  int encoding_slots() const { return encoding_slots_; }
  int param_slots() const { return param_slots_; }
  /// Longest observation the encoding accepts.
  int input_capacity() const { return encoding_slots_; }
  std::span<const PlanEntry> plan() const { return plan_; }

 private:
  int n_qubits_ = 0;
  int n_layers_ = 0;
  Encoding encoding_ = Encoding::Angle;
  int encoding_slots_ = 0;
  int param_slots_ = 0;
  std::vector<PlanEntry> plan_;
};

struct ExpectationSoftmax {
  double beta = kDefaultBeta;
};

struct Pvm {
  std::vector<int> wires;
};

using ReadoutMode = std::variant<ExpectationSoftmax, Pvm>;

/// PVM over the first log2(action_dim) wires. action_dim must be a power of two.
Pvm pvm_for_actions(int action_dim);

class ActionDistribution {
 public:
  ActionDistribution() = default;
  explicit ActionDistribution(Eigen::VectorXd probabilities);

  int action_dim() const { return static_cast<int>(probs_.size()); }
  const Eigen::VectorXd& probabilities() const { return probs_; }
  double probability(int action) const;
  double log_prob(int action) const;
  /// Inverse-CDF sample from one uniform draw.
  int sample(Rng& rng) const;

 private:
  Eigen::VectorXd probs_;
};

/// RY(2 atan(obs_i)) per wire, zero-padded to `n_qubits` gates.
std::vector<qsim::Gate> encode_observation(std::span<const double> obs, int n_qubits);
std::vector<qsim::Gate> encode_observation(const Observation& obs, int n_qubits);

/// Encoding angles for `obs` under `tmpl`'s encoding, one per encoding slot.
Eigen::VectorXd encoding_angles(const CircuitTemplate& tmpl, const Observation& obs);

/// Concrete gate list for (template, params, obs).
std::vector<qsim::Gate> bind(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs);

/// Runs the template on |0..0> and writes the final amplitudes into `out`.
/// `angles` are encoding angles; no validation beyond sizes.
void simulate_into(const CircuitTemplate& tmpl, const ParamVector& params, const Eigen::VectorXd& angles,
                   qsim::Amplitudes<double>& out);

qsim::StateVector simulate(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs);

void check_params(const CircuitTemplate& tmpl, const ParamVector& params);
void check_readout(const CircuitTemplate& tmpl, const ReadoutMode& readout, int action_dim);

/// Applies the probability floor: p -> (p + eps) / (1 + A eps).
Eigen::VectorXd floor_and_renormalize(const Eigen::VectorXd& p);
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

ActionDistribution actor_forward(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs,
                                 const ReadoutMode& readout, int action_dim);

/// v_scale * <Z_0> of the circuit on the encoded summary.
double critic_forward(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& summary,
                      double v_scale = kDefaultValueScale);

/// Element-wise mean followed by element-wise max; length 2M for any N.
Eigen::VectorXd joint_summary(std::span<const Observation> observations);

int param_count(const CircuitTemplate& tmpl);

/// Uniform on (-pi/100, pi/100).
ParamVector init_params(const CircuitTemplate& tmpl, Rng& rng);

}  // namespace qmarl::vqc
