#pragma once

// Parameter-shift derivatives of circuit readouts, loss-gradient assembly
// for the actor and critic, and the Adam optimizer.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "qmarl/vqc.hpp"

namespace qmarl::pshift {

using GradientVector = Eigen::VectorXd;
using vqc::CircuitTemplate;
using vqc::Observation;
using vqc::ParamVector;

/// <Z> on one wire.
struct ZReadout {
  int wire = 0;
};

/// Probability of reading `pattern` on `wires` (first wire = most significant bit).
struct ProbabilityReadout {
  std::vector<int> wires;
  std::uint64_t pattern = 0;
};

using ReadoutSelector = std::variant<ZReadout, ProbabilityReadout>;

/// d f / d theta = prefactor * (f(theta + shift) - f(theta - shift)).
/// Exact for gates exp(-i theta P / 2) with P a Pauli operator.
struct ShiftRule {
  double shift = std::numbers::pi / 2;
  double prefactor = 0.5;
};

struct ShiftOptions {
  ShiftRule rule{};
  /// Called once per shifted circuit evaluation.
  std::function<void()> on_evaluation;
  /// Loss gradients normally take every shifted difference from one adjoint
  /// sweep, using f(t+s) - f(t-s) = 2 sin(s) f'(t). Set to evaluate the
  /// shifted circuits one by one instead (slower, same result).
  bool literal_shifts = false;
};

void check_selector(const CircuitTemplate& tmpl, const ReadoutSelector& selector);

double evaluate_readout(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs,
                        const ReadoutSelector& selector);

/// One entry per trainable slot; 2 * param_slots shifted evaluations.
GradientVector shift_gradient(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs,
                              const ReadoutSelector& selector, const ShiftOptions& options = {});

/// Rows: readouts, columns: parameters. Every shifted circuit is evaluated
/// once and all readouts are taken from it, so the cost stays 2 * param_slots.
Eigen::MatrixXd shift_jacobian(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs,
                               std::span<const ReadoutSelector> selectors, const ShiftOptions& options = {});

/// Same matrix as shift_jacobian, from a backward adjoint sweep: about
/// 1 + selectors.size() circuits regardless of param_slots.
Eigen::MatrixXd adjoint_shift_jacobian(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs,
                                       std::span<const ReadoutSelector> selectors, const ShiftRule& rule = {});

/// Central differences (f(theta_j + h) - f(theta_j - h)) / 2h. Test oracle.
GradientVector finite_difference_oracle(const CircuitTemplate& tmpl, const ParamVector& params,
                                        const Observation& obs, const ReadoutSelector& selector, double h);

struct ActorSample {
  Observation obs;
  int action = 0;
  double advantage = 0.0;
};

struct ActorLossGradient {
  double loss = 0.0;
  GradientVector grad;
  /// d loss / d beta; zero under PVM readout.
  double grad_beta = 0.0;
};

/// loss = -mean(log pi(a|s) * A), gradient by chain rule through shift_gradient.
ActorLossGradient actor_loss_gradient(std::span<const ActorSample> batch, const CircuitTemplate& tmpl,
                                      const ParamVector& params, const vqc::ReadoutMode& readout, int action_dim,
                                      const ShiftOptions& options = {});

struct CriticSample {
  Observation summary;
  double target = 0.0;
};

struct CriticLossGradient {
  double loss = 0.0;
  GradientVector grad;
  double grad_v_scale = 0.0;
};

/// loss = mean((critic_forward - target)^2).
CriticLossGradient critic_loss_gradient(std::span<const CriticSample> batch, const CircuitTemplate& tmpl,
                                        const ParamVector& params, double v_scale,
                                        const ShiftOptions& options = {});

struct OptimizerState {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::int64_t step_count = 0;

  static OptimizerState for_size(Eigen::Index n, double learning_rate);
};

/// Bias-corrected Adam step.
std::pair<ParamVector, OptimizerState> optimizer_step(const ParamVector& params, const GradientVector& grad,
                                                      OptimizerState state);

}  // namespace qmarl::pshift
