#include "doctest.h"

#include <numbers>

#include "qmarl/vqc.hpp"
#include "testing.hpp"

using namespace qmarl;
using namespace qmarl::vqc;
using qsim::Gate;
using qsim::GateKind;

namespace {

// Independent hand composition of the layered ansatz used as an oracle.
std::vector<Gate> manual_layers(const ParamVector& p, int n, int layers) {
  std::vector<Gate> g;
  int k = 0;
  for (int l = 0; l < layers; ++l) {
    for (int w = 0; w < n; ++w) {
      g.push_back(Gate::rx(w, p(k++)));
      g.push_back(Gate::ry(w, p(k++)));
      g.push_back(Gate::rz(w, p(k++)));
    }
    for (int w = 0; n >= 2 && w < n; ++w) g.push_back(Gate::cnot(w, (w + 1) % n));
  }
  return g;
}

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST_CASE("template structure") {
  const auto t = CircuitTemplate::layered(4, 3);
  CHECK(t.param_slots() == 36);
  CHECK(t.encoding_slots() == 4);
  int cnots = 0;
  for (const auto& e : t.plan()) cnots += e.kind == GateKind::CNOT;
  CHECK(cnots == 12);
  // Each layer ends with the ring 0->1, 1->2, 2->3, 3->0.
  const auto plan = t.plan();
  const auto& last = plan[plan.size() - 1];
  CHECK(last.control == 3);
  CHECK(last.target == 0);
  CHECK(CircuitTemplate::layered(1, 1).param_slots() == 3);
  CHECK(CircuitTemplate::layered(4, 3, Encoding::Dense).input_capacity() == 8);
  CHECK_THROWS_AS(CircuitTemplate::layered(4, 0), ConfigError);
  CHECK_THROWS_AS(CircuitTemplate::layered(17, 1), SizeError);
}

TEST_CASE("encode_observation") {
  const auto zero = encode_observation(vec({0, 0}), 2);
  REQUIRE(zero.size() == 2);
  CHECK(zero[0].kind == GateKind::RY);
  CHECK(*zero[0].angle == 0.0);
  CHECK(zero[1].target == 1);

  CHECK(*encode_observation(vec({1}), 1)[0].angle == doctest::Approx(std::numbers::pi / 2).epsilon(1e-15));

  const auto padded = encode_observation(vec({0.3, -0.7}), 4);
  REQUIRE(padded.size() == 4);
  CHECK(*padded[0].angle == doctest::Approx(0.5829135889557342).epsilon(1e-15));
  CHECK(*padded[1].angle == doctest::Approx(-1.2214519287784171).epsilon(1e-15));
  CHECK(*padded[2].angle == 0.0);
  CHECK(*padded[3].angle == 0.0);

  CHECK_THROWS_AS(encode_observation(vec({1, 2, 3}), 2), DimensionError);
}

TEST_CASE("actor_forward readouts") {
  const auto t = CircuitTemplate::layered(2, 2);
  const ParamVector zeros = ParamVector::Zero(t.param_slots());
  const auto d = actor_forward(t, zeros, vec({0, 0}), pvm_for_actions(4), 4);
  const double eps = kEpsilonFloor / (1 + 4 * kEpsilonFloor);
  CHECK(d.probability(0) == doctest::Approx(1 - 3 * eps).epsilon(1e-14));
  CHECK(d.probability(3) == doctest::Approx(eps).epsilon(1e-12));

  Rng rng(3);
  const auto t4 = CircuitTemplate::layered(4, 2);
  const auto p = init_params(t4, rng);
  const auto uniform = actor_forward(t4, p, vec({0.2, 0.5}), ExpectationSoftmax{0.0}, 3);
  for (int a = 0; a < 3; ++a) CHECK(uniform.probability(a) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  CHECK_THROWS_AS(actor_forward(t4, p, vec({0}), ExpectationSoftmax{}, 5), ConfigError);
  CHECK_THROWS_AS(actor_forward(t4, p, vec({0}), pvm_for_actions(4), 8), ConfigError);
  CHECK_THROWS_AS(actor_forward(t4, p, vec({0}), Pvm{{0, 0}}, 4), ConfigError);
}

TEST_CASE("actor_forward matches a hand-composed circuit") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = CircuitTemplate::layered(4, 2);
    ParamVector p(t.param_slots());
    for (auto& x : p) x = uniform(rng, -3, 3);
    const Eigen::VectorXd obs = vec({uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2)});

    auto gates = encode_observation(obs, 4);
    const auto layers = manual_layers(p, 4, 2);
    gates.insert(gates.end(), layers.begin(), layers.end());
    const auto state = qsim::run_circuit(qsim::zero_state(4), gates);
    const int wires[] = {0, 1, 2, 3};
    const Eigen::VectorXd expected = floor_and_renormalize(qsim::basis_probabilities(state, wires));

    const auto d = actor_forward(t, p, obs, pvm_for_actions(16), 16);
    CHECK((d.probabilities() - expected).cwiseAbs().maxCoeff() < 1e-12);

    // Softmax readout: beta * (<Z_0>, <Z_1>) through softmax.
    Eigen::Vector2d z(qsim::expectation_z(state, 0), qsim::expectation_z(state, 1));
    const Eigen::VectorXd soft = floor_and_renormalize(softmax(1.7 * z));
    CHECK((actor_forward(t, p, obs, ExpectationSoftmax{1.7}, 2).probabilities() - soft).cwiseAbs().maxCoeff() <
          1e-12);
  }
}

TEST_CASE("critic_forward") {
  const auto t = CircuitTemplate::layered(4, 3, Encoding::Dense);
  const ParamVector zeros = ParamVector::Zero(t.param_slots());
  CHECK(critic_forward(t, zeros, Eigen::VectorXd::Zero(8), 20.0) == doctest::Approx(20.0).epsilon(1e-14));

  Rng rng(12);
  ParamVector p(t.param_slots());
  for (auto& x : p) x = uniform(rng, -3, 3);
  Eigen::VectorXd s(8);
  for (auto& x : s) x = uniform(rng, -1, 2);

  // Dense encoding by hand: RY(2 atan s_i) then RZ(2 atan s_{4+i}) per wire.
  std::vector<Gate> gates;
  for (int w = 0; w < 4; ++w) {
    gates.push_back(Gate::ry(w, 2 * std::atan(s(w))));
    gates.push_back(Gate::rz(w, 2 * std::atan(s(4 + w))));
  }
  const auto layers = manual_layers(p, 4, 3);
  gates.insert(gates.end(), layers.begin(), layers.end());
  const double expected = 20.0 * qsim::expectation_z(qsim::run_circuit(qsim::zero_state(4), gates), 0);
  CHECK(critic_forward(t, p, s, 20.0) == doctest::Approx(expected).epsilon(1e-12));

  for (int trial = 0; trial < 200; ++trial) {
    for (auto& x : p) x = uniform(rng, -4, 4);
    for (auto& x : s) x = uniform(rng, -5, 5);
    CHECK(std::abs(critic_forward(t, p, s, 7.5)) <= 7.5 + 1e-12);
  }
  CHECK_THROWS_AS(critic_forward(t, p, Eigen::VectorXd::Zero(9), 1.0), DimensionError);
}

TEST_CASE("joint_summary") {
  std::vector<Observation> one = {vec({1, 2})};
  CHECK(joint_summary(one) == vec({1, 2, 1, 2}));
  std::vector<Observation> two = {vec({0, 0}), vec({2, 4})};
  CHECK(joint_summary(two) == vec({1, 2, 2, 4}));
  for (int n = 1; n <= 32; ++n) {
    std::vector<Observation> many(static_cast<std::size_t>(n), vec({0.5, -1, 3}));
    const auto s = joint_summary(many);
    CHECK(s.size() == 6);
    CHECK((s - joint_summary(std::span(many).first(1))).cwiseAbs().maxCoeff() < 1e-15);
  }
  std::vector<Observation> ragged = {vec({1}), vec({1, 2})};
  CHECK_THROWS_AS(joint_summary(ragged), DimensionError);
  CHECK_THROWS_AS(joint_summary(std::span<const Observation>{}), DimensionError);
}

TEST_CASE("parameter accounting") {
  CHECK(param_count(CircuitTemplate::layered(4, 3)) == 36);
  CHECK(param_count(CircuitTemplate::layered(1, 1)) == 3);
  // Two actors, one critic, softmax temperature and value scale.
  const int total = 2 * param_count(CircuitTemplate::layered(4, 3)) +
                    param_count(CircuitTemplate::layered(4, 3, Encoding::Dense)) + 2;
  CHECK(total == 110);
}

TEST_CASE("distribution validity and determinism") {
  Rng rng(13);
  const auto t = CircuitTemplate::layered(4, 2);
  for (int trial = 0; trial < 1000; ++trial) {
    ParamVector p(t.param_slots());
    for (auto& x : p) x = uniform(rng, -4, 4);
    Eigen::VectorXd obs(4);
    for (auto& x : obs) x = uniform(rng, -3, 3);
    const bool pvm = trial % 2 == 0;
    const int a = pvm ? 8 : 4;
    const ReadoutMode mode = pvm ? ReadoutMode(pvm_for_actions(8)) : ReadoutMode(ExpectationSoftmax{uniform(rng, 0, 30)});
    const auto d = actor_forward(t, p, obs, mode, a);
    CHECK(std::abs(d.probabilities().sum() - 1.0) <= 1e-9);
    CHECK(d.probabilities().minCoeff() >= kEpsilonFloor / (1 + a * kEpsilonFloor) * (1 - 1e-9));
    if (trial < 10) CHECK(actor_forward(t, p, obs, mode, a).probabilities() == d.probabilities());
  }
}

TEST_CASE("ActionDistribution sampling") {
  ActionDistribution d(vec({0.25, 0.75}));
  Rng rng(9);
  int ones = 0;
  for (int i = 0; i < 20000; ++i) ones += d.sample(rng);
  CHECK(ones / 20000.0 == doctest::Approx(0.75).epsilon(0.02));
  CHECK_THROWS_AS(d.probability(2), ActionError);
}
