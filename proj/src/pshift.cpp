#include "qmarl/pshift.hpp"

#include <cmath>
#include <map>
#include <string>

namespace qmarl::pshift {
namespace {

using Amps = qsim::Amplitudes<double>;

struct Evaluator {
  const CircuitTemplate& tmpl;
  Eigen::VectorXd angles;
  Amps buffer;

  Evaluator(const CircuitTemplate& t, const Observation& obs) : tmpl(t), angles(vqc::encoding_angles(t, obs)) {}

  const Amps& run(const ParamVector& params) {
    vqc::simulate_into(tmpl, params, angles, buffer);
    return buffer;
  }
};

double read(const Amps& amps, int n_qubits, const ReadoutSelector& selector) {
  if (const auto* z = std::get_if<ZReadout>(&selector)) return qsim::expectation_z(amps, n_qubits, z->wire);
  const auto& p = std::get<ProbabilityReadout>(selector);
  if (static_cast<int>(p.wires.size()) == n_qubits) {
    // Full-register pattern: a single amplitude.
    std::uint64_t index = 0;
    for (std::size_t i = 0; i < p.wires.size(); ++i)
      if ((p.pattern >> (p.wires.size() - 1 - i)) & 1u) index |= qsim::detail::wire_mask(p.wires[i], n_qubits);
    return std::norm(amps(static_cast<Eigen::Index>(index)));
  }
  double acc = 0.0;
  const auto dim = static_cast<std::uint64_t>(amps.size());
  for (std::uint64_t i = 0; i < dim; ++i)
    if (qsim::pattern_of(i, p.wires, n_qubits) == p.pattern) acc += std::norm(amps(static_cast<Eigen::Index>(i)));
  return acc;
}

std::optional<std::uint64_t> full_register_index(const ReadoutSelector& selector, int n_qubits) {
  const auto* p = std::get_if<ProbabilityReadout>(&selector);
  if (!p || static_cast<int>(p->wires.size()) != n_qubits) return std::nullopt;
  std::uint64_t index = 0;
  for (std::size_t i = 0; i < p->wires.size(); ++i)
    if ((p->pattern >> (p->wires.size() - 1 - i)) & 1u) index |= qsim::detail::wire_mask(p->wires[i], n_qubits);
  return index;
}

void apply_plan_entry(Amps& amps, int n, const vqc::PlanEntry& e, double theta) {
  qsim::apply_gate_unchecked<double>(amps, n, e.kind, e.target, e.control, theta);
}

double plan_angle(const vqc::PlanEntry& e, const Eigen::VectorXd& angles, const ParamVector& params) {
  switch (e.source) {
    case vqc::SlotSource::Encoding:
      return angles(e.slot);
    case vqc::SlotSource::Parameter:
      return params(e.slot);
    case vqc::SlotSource::Fixed:
      break;
  }
  return 0.0;
}

// Shifted readouts for a rank-one projector |b><b|. With psi the state just
// before a parameterized gate G and phi = (gates after G)^dagger |b>, the
// shifted readout is |<phi| G(theta +- s) psi>|^2. Both vectors are obtained
// by one backward sweep, so all 2P shifted values cost about three circuits.
std::vector<std::pair<double, double>> rank_one_shifted_values(const CircuitTemplate& tmpl, const ParamVector& params,
                                                               const Eigen::VectorXd& angles, std::uint64_t index,
                                                               const ShiftRule& rule) {
  const int n = tmpl.n_qubits();
  Amps psi;
  vqc::simulate_into(tmpl, params, angles, psi);
  Amps phi = Amps::Zero(psi.size());
  phi(static_cast<Eigen::Index>(index)) = 1.0;
  Amps scratch;
  std::vector<std::pair<double, double>> out(static_cast<std::size_t>(tmpl.param_slots()));
  const auto plan = tmpl.plan();
  for (std::size_t k = plan.size(); k-- > 0;) {
    const auto& e = plan[k];
    const double theta = plan_angle(e, angles, params);
    apply_plan_entry(psi, n, e, -theta);  // psi now precedes gate k
    if (e.source == vqc::SlotSource::Parameter) {
      scratch = psi;
      apply_plan_entry(scratch, n, e, theta + rule.shift);
      const double plus = std::norm(phi.dot(scratch));
      scratch = psi;
      apply_plan_entry(scratch, n, e, theta - rule.shift);
      const double minus = std::norm(phi.dot(scratch));
      out[static_cast<std::size_t>(e.slot)] = {plus, minus};
    }
    apply_plan_entry(phi, n, e, -theta);
  }
  return out;
}

// O psi for a diagonal readout observable.
Amps apply_observable(const Amps& psi, int n, const ReadoutSelector& selector) {
  Amps out = psi;
  const auto dim = static_cast<std::uint64_t>(psi.size());
  if (const auto* z = std::get_if<ZReadout>(&selector)) {
    const auto mask = qsim::detail::wire_mask(z->wire, n);
    for (std::uint64_t i = 0; i < dim; ++i)
      if (i & mask) out(static_cast<Eigen::Index>(i)) = -out(static_cast<Eigen::Index>(i));
    return out;
  }
  if (const auto index = full_register_index(selector, n)) {
    const auto i = static_cast<Eigen::Index>(*index);
    const auto amp = psi(i);
    out.setZero();
    out(i) = amp;
    return out;
  }
  const auto& p = std::get<ProbabilityReadout>(selector);
  for (std::uint64_t i = 0; i < dim; ++i)
    if (qsim::pattern_of(i, p.wires, n) != p.pattern) out(static_cast<Eigen::Index>(i)) = 0.0;
  return out;
}

void notify(const ShiftOptions& options, int times) {
  if (!options.on_evaluation) return;
  for (int i = 0; i < times; ++i) options.on_evaluation();
}

// Ordered key for memoizing per-input gradients inside one batch.
std::vector<double> key_of(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void check_selector(const CircuitTemplate& tmpl, const ReadoutSelector& selector) {
  const int n = tmpl.n_qubits();
  try {
    if (const auto* z = std::get_if<ZReadout>(&selector)) {
      qsim::detail::check_wire(z->wire, n, "readout");
      return;
    }
    const auto& p = std::get<ProbabilityReadout>(selector);
    qsim::validate_wire_subset(p.wires, n);
    if (p.pattern >= (std::uint64_t{1} << p.wires.size()))
      throw ConfigError("pattern " + std::to_string(p.pattern) + " does not fit on " + std::to_string(p.wires.size()) +
                        " wires");
  } catch (const WireError& e) {
    throw ConfigError(std::string("invalid readout selector: ") + e.what());
  }
}

double evaluate_readout(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs,
                        const ReadoutSelector& selector) {
  vqc::check_params(tmpl, params);
  check_selector(tmpl, selector);
  Evaluator ev(tmpl, obs);
  return read(ev.run(params), tmpl.n_qubits(), selector);
}

Eigen::MatrixXd shift_jacobian(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs,
                               std::span<const ReadoutSelector> selectors, const ShiftOptions& options) {
  vqc::check_params(tmpl, params);
  for (const auto& s : selectors) check_selector(tmpl, s);
  const int n = tmpl.n_qubits();
  const Eigen::Index p = tmpl.param_slots();
  const auto rows = static_cast<Eigen::Index>(selectors.size());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(rows, p);
  Evaluator ev(tmpl, obs);

  if (selectors.size() == 1) {
    if (const auto index = full_register_index(selectors[0], n)) {
      const auto values = rank_one_shifted_values(tmpl, params, ev.angles, *index, options.rule);
      for (Eigen::Index j = 0; j < p; ++j) {
        const auto [plus, minus] = values[static_cast<std::size_t>(j)];
        jac(0, j) = options.rule.prefactor * (plus - minus);
      }
      notify(options, static_cast<int>(2 * p));
      return jac;
    }
  }

  // Forward sweep: the state before each parameterized gate is shared by
  // both of its shifted circuits, so only the suffix is re-simulated.
  const auto plan = tmpl.plan();
  Amps psi = Amps::Zero(Eigen::Index{1} << n);
  psi(0) = 1.0;
  Amps scratch;
  auto shifted_readouts = [&](std::size_t k, double theta) {
    scratch = psi;
    apply_plan_entry(scratch, n, plan[k], theta);
    for (std::size_t m = k + 1; m < plan.size(); ++m)
      apply_plan_entry(scratch, n, plan[m], plan_angle(plan[m], ev.angles, params));
    Eigen::VectorXd f(rows);
    for (Eigen::Index r = 0; r < rows; ++r) f(r) = read(scratch, n, selectors[static_cast<std::size_t>(r)]);
    return f;
  };
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const auto& e = plan[k];
    const double theta = plan_angle(e, ev.angles, params);
    if (e.source == vqc::SlotSource::Parameter) {
      const Eigen::VectorXd plus = shifted_readouts(k, theta + options.rule.shift);
      const Eigen::VectorXd minus = shifted_readouts(k, theta - options.rule.shift);
      jac.col(e.slot) += options.rule.prefactor * (plus - minus);
      notify(options, 2);
    }
    apply_plan_entry(psi, n, e, theta);
  }
  return jac;
}

namespace {

// Backward adjoint sweep. `psi` is the final state and each lambda is O psi
// for a diagonal observable O. With psi, lambda the states just after gate k,
// f' = Im<lambda|P psi>, and P psi = i G(pi) psi.
Eigen::MatrixXd adjoint_rows(const CircuitTemplate& tmpl, const ParamVector& params, const Eigen::VectorXd& angles,
                             Amps psi, std::vector<Amps> lambda, const ShiftRule& rule) {
  const int n = tmpl.n_qubits();
  const auto rows = static_cast<Eigen::Index>(lambda.size());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(rows, tmpl.param_slots());
  const double scale = rule.prefactor * 2.0 * std::sin(rule.shift);
  const auto plan = tmpl.plan();
  Amps scratch;
  for (std::size_t k = plan.size(); k-- > 0;) {
    const auto& e = plan[k];
    if (e.source == vqc::SlotSource::Parameter) {
      scratch = psi;
      apply_plan_entry(scratch, n, e, std::numbers::pi);
      for (Eigen::Index r = 0; r < rows; ++r)
        jac(r, e.slot) += scale * lambda[static_cast<std::size_t>(r)].dot(scratch).real();
    }
    if (k == 0) break;
    const double theta = plan_angle(e, angles, params);
    apply_plan_entry(psi, n, e, -theta);
    for (auto& l : lambda) apply_plan_entry(l, n, e, -theta);
  }
  return jac;
}

// Gradient of sum_r weights(r) * f_r with a single adjoint vector.
GradientVector weighted_adjoint_gradient(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs,
                                         std::span<const ReadoutSelector> selectors, const Eigen::VectorXd& weights,
                                         const ShiftRule& rule) {
  const int n = tmpl.n_qubits();
  Evaluator ev(tmpl, obs);
  const Amps& psi = ev.run(params);
  Amps lambda = Amps::Zero(psi.size());
  for (std::size_t r = 0; r < selectors.size(); ++r) {
    const double w = weights(static_cast<Eigen::Index>(r));
    if (w == 0.0) continue;
    if (const auto index = full_register_index(selectors[r], n)) {
      const auto i = static_cast<Eigen::Index>(*index);
      lambda(i) += w * psi(i);
    } else {
      lambda += w * apply_observable(psi, n, selectors[r]);
    }
  }
  return adjoint_rows(tmpl, params, ev.angles, psi, {std::move(lambda)}, rule).row(0).transpose();
}

// Weighted readout gradient, literal or adjoint per the options.
GradientVector weighted_gradient(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs,
                                 std::span<const ReadoutSelector> selectors, const Eigen::VectorXd& weights,
                                 const ShiftOptions& options) {
  if (options.literal_shifts) return shift_jacobian(tmpl, params, obs, selectors, options).transpose() * weights;
  return weighted_adjoint_gradient(tmpl, params, obs, selectors, weights, options.rule);
}

}  // namespace

Eigen::MatrixXd adjoint_shift_jacobian(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs,
                                       std::span<const ReadoutSelector> selectors, const ShiftRule& rule) {
  vqc::check_params(tmpl, params);
  for (const auto& s : selectors) check_selector(tmpl, s);
  Evaluator ev(tmpl, obs);
  const Amps& psi = ev.run(params);
  std::vector<Amps> lambda;
  for (const auto& s : selectors) lambda.push_back(apply_observable(psi, tmpl.n_qubits(), s));
  return adjoint_rows(tmpl, params, ev.angles, psi, std::move(lambda), rule);
}

GradientVector shift_gradient(const CircuitTemplate& tmpl, const ParamVector& params, const Observation& obs,
                              const ReadoutSelector& selector, const ShiftOptions& options) {
  const ReadoutSelector one[] = {selector};
  return shift_jacobian(tmpl, params, obs, one, options).row(0).transpose();
}

GradientVector finite_difference_oracle(const CircuitTemplate& tmpl, const ParamVector& params,
                                        const Observation& obs, const ReadoutSelector& selector, double h) {
  if (!(h > 0)) throw ConfigError("finite-difference step must be positive");
  vqc::check_params(tmpl, params);
  check_selector(tmpl, selector);
  Evaluator ev(tmpl, obs);
  GradientVector g(tmpl.param_slots());
  ParamVector shifted = params;
  for (Eigen::Index j = 0; j < params.size(); ++j) {
    shifted(j) = params(j) + h;
    const double plus = read(ev.run(shifted), tmpl.n_qubits(), selector);
    shifted(j) = params(j) - h;
    const double minus = read(ev.run(shifted), tmpl.n_qubits(), selector);
    shifted(j) = params(j);
    g(j) = (plus - minus) / (2 * h);
  }
  return g;
}

ActorLossGradient actor_loss_gradient(std::span<const ActorSample> batch, const CircuitTemplate& tmpl,
                                      const ParamVector& params, const vqc::ReadoutMode& readout, int action_dim,
                                      const ShiftOptions& options) {
  if (batch.empty()) throw BatchError("actor batch is empty");
  vqc::check_readout(tmpl, readout, action_dim);
  vqc::check_params(tmpl, params);
  for (const auto& s : batch) {
    if (!std::isfinite(s.advantage)) throw DataError("non-finite advantage in actor batch");
    if (s.action < 0 || s.action >= action_dim) throw ActionError("action " + std::to_string(s.action) + " out of range");
  }

  const int n = tmpl.n_qubits();
  const double renorm = 1.0 + action_dim * vqc::kEpsilonFloor;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  ActorLossGradient out;
  out.grad = GradientVector::Zero(tmpl.param_slots());

  if (const auto* soft = std::get_if<vqc::ExpectationSoftmax>(&readout)) {
    std::vector<ReadoutSelector> selectors;
    for (int k = 0; k < action_dim; ++k) selectors.push_back(ZReadout{k});
    // Readout weights d loss / d z, summed per distinct observation.
    std::map<std::vector<double>, Eigen::VectorXd> z_weights;
    Amps amps;
    for (const auto& s : batch) {
      vqc::simulate_into(tmpl, params, vqc::encoding_angles(tmpl, s.obs), amps);
      Eigen::VectorXd z(action_dim);
      for (int k = 0; k < action_dim; ++k) z(k) = qsim::expectation_z(amps, n, k);
      const Eigen::VectorXd p = vqc::softmax(soft->beta * z);
      const double pi = (p(s.action) + vqc::kEpsilonFloor) / renorm;
      out.loss -= std::log(pi) * s.advantage * inv_batch;
      if (s.advantage == 0.0) continue;

      // d p_a / d z_k = beta p_a (delta_ak - p_k)
      Eigen::VectorXd dp_dz = -soft->beta * p(s.action) * p;
      dp_dz(s.action) += soft->beta * p(s.action);
      const double weight = -s.advantage / pi / renorm * inv_batch;
      auto [it, fresh] = z_weights.try_emplace(key_of(s.obs), Eigen::VectorXd::Zero(action_dim));
      it->second += weight * dp_dz;
      out.grad_beta += weight * p(s.action) * (z(s.action) - p.dot(z));
    }
    for (const auto& [key, w] : z_weights) {
      const Observation obs = Eigen::Map<const Eigen::VectorXd>(key.data(), static_cast<Eigen::Index>(key.size()));
      out.grad += weighted_gradient(tmpl, params, obs, selectors, w, options);
    }
    return out;
  }

  const auto& wires = std::get<vqc::Pvm>(readout).wires;
  // Loss first; weights accumulate per (obs, action) so each distinct
  // probability is differentiated once.
  std::map<std::vector<double>, std::pair<Amps, std::map<int, double>>> groups;
  for (const auto& s : batch) {
    auto g = groups.find(key_of(s.obs));
    if (g == groups.end()) {
      g = groups.emplace(key_of(s.obs), std::make_pair(Amps(), std::map<int, double>())).first;
      vqc::simulate_into(tmpl, params, vqc::encoding_angles(tmpl, s.obs), g->second.first);
    }
    const ReadoutSelector sel = ProbabilityReadout{wires, static_cast<std::uint64_t>(s.action)};
    const double prob = std::max(read(g->second.first, n, sel), 0.0);
    const double pi = (prob + vqc::kEpsilonFloor) / renorm;
    out.loss -= std::log(pi) * s.advantage * inv_batch;
    if (s.advantage == 0.0) continue;
    g->second.second[s.action] += -s.advantage / pi / renorm * inv_batch;
  }
  for (const auto& [key, group] : groups) {
    const auto& weights = group.second;
    if (weights.empty()) continue;
    const Observation obs = Eigen::Map<const Eigen::VectorXd>(key.data(), static_cast<Eigen::Index>(key.size()));
    std::vector<ReadoutSelector> selectors;
    Eigen::VectorXd w(static_cast<Eigen::Index>(weights.size()));
    for (const auto& [action, weight] : weights) {
      w(static_cast<Eigen::Index>(selectors.size())) = weight;
      selectors.push_back(ProbabilityReadout{wires, static_cast<std::uint64_t>(action)});
    }
    out.grad += weighted_gradient(tmpl, params, obs, selectors, w, options);
  }
  return out;
}

CriticLossGradient critic_loss_gradient(std::span<const CriticSample> batch, const CircuitTemplate& tmpl,
                                        const ParamVector& params, double v_scale, const ShiftOptions& options) {
  if (batch.empty()) throw BatchError("critic batch is empty");
  vqc::check_params(tmpl, params);
  for (const auto& s : batch)
    if (!std::isfinite(s.target)) throw DataError("non-finite critic target");

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  CriticLossGradient out;
  out.grad = GradientVector::Zero(tmpl.param_slots());
  std::map<std::vector<double>, std::pair<double, GradientVector>> cache;
  Evaluator ev(tmpl, Observation());
  for (const auto& s : batch) {
    auto it = cache.find(key_of(s.summary));
    if (it == cache.end()) {
      ev.angles = vqc::encoding_angles(tmpl, s.summary);
      const double z0 = qsim::expectation_z(ev.run(params), tmpl.n_qubits(), 0);
      it = cache.emplace(key_of(s.summary), std::make_pair(z0, GradientVector())).first;
    }
    const double z0 = it->second.first;
    const double residual = v_scale * z0 - s.target;
    out.loss += residual * residual * inv_batch;
    if (residual == 0.0) continue;
    if (it->second.second.size() == 0) {
      const ReadoutSelector z0_sel[] = {ZReadout{0}};
      it->second.second = weighted_gradient(tmpl, params, s.summary, z0_sel, Eigen::VectorXd::Ones(1), options);
    }
    out.grad += (2.0 * residual * v_scale * inv_batch) * it->second.second;
    out.grad_v_scale += 2.0 * residual * z0 * inv_batch;
  }
  return out;
}

OptimizerState OptimizerState::for_size(Eigen::Index n, double learning_rate) {
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  OptimizerState s;
  s.learning_rate = learning_rate;
  s.first_moment = Eigen::VectorXd::Zero(n);
  s.second_moment = Eigen::VectorXd::Zero(n);
  return s;
}

std::pair<ParamVector, OptimizerState> optimizer_step(const ParamVector& params, const GradientVector& grad,
                                                      OptimizerState state) {
  if (grad.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw DimensionError("optimizer length mismatch: params " + std::to_string(params.size()) + ", grad " +
                         std::to_string(grad.size()) + ", moments " + std::to_string(state.first_moment.size()));
  state.step_count += 1;
  state.first_moment = state.beta1 * state.first_moment + (1 - state.beta1) * grad;
  state.second_moment = state.beta2 * state.second_moment + (1 - state.beta2) * grad.cwiseAbs2();
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1 - std::pow(state.beta1, t);
  const double c2 = 1 - std::pow(state.beta2, t);
  const Eigen::ArrayXd m_hat = state.first_moment.array() / c1;
  const Eigen::ArrayXd v_hat = state.second_moment.array() / c2;
  ParamVector next = params.array() - state.learning_rate * m_hat / (v_hat.sqrt() + state.eps);
  return {std::move(next), std::move(state)};
}

}  // namespace qmarl::pshift
