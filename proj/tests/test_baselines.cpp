#include "doctest.h"

#include <cmath>

#include "qmarl/baselines.hpp"
#include "qmarl/error.hpp"

using namespace qmarl;
using namespace qmarl::baselines;

namespace {

// Independent scalar-loop evaluation of a dense net.
std::vector<double> reference_forward(const DenseNet& net, std::vector<double> x) {
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    const auto& w = net.weights[l];
    std::vector<double> y(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double acc = net.biases[l](r);
      for (Eigen::Index c = 0; c < w.cols(); ++c) acc += w(r, c) * x[static_cast<std::size_t>(c)];
      y[static_cast<std::size_t>(r)] = l + 1 < net.n_layers() ? std::tanh(acc) : acc;
    }
    x = std::move(y);
  }
  return x;
}

DenseNet random_net(Rng& rng, std::vector<int> sizes) {
  DenseNet net = DenseNet::zeros(std::move(sizes));
  Eigen::VectorXd p(net.param_count());
  for (auto& x : p) x = uniform(rng, -1.5, 1.5);
  net.set_flat(p);
  return net;
}

}  // namespace

TEST_CASE("dense_forward") {
  const DenseNet zero = DenseNet::zeros({3, 5, 2});
  CHECK(dense_forward(zero, Eigen::Vector3d(1, -2, 3).eval()).isZero());

  DenseNet id = DenseNet::zeros({2, 2});
  id.weights[0].setIdentity();
  const Eigen::VectorXd x = Eigen::Vector2d(0.3, -4.0);
  CHECK(dense_forward(id, x) == x);

  Rng rng = make_rng(1, Stream::Baseline);
  for (int t = 0; t < 50; ++t) {
    const DenseNet net = random_net(rng, {4, 1 + static_cast<int>(uniform_index(rng, 6)), 3, 2});
    Eigen::VectorXd in(4);
    for (auto& v : in) v = uniform(rng, -2, 2);
    const auto ref = reference_forward(net, {in.data(), in.data() + in.size()});
    const auto got = dense_forward(net, in);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got(static_cast<Eigen::Index>(i)) == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(dense_forward(zero, Eigen::Vector2d(1, 2).eval()), DimensionError);
}

TEST_CASE("dense_backprop") {
  Rng rng = make_rng(2, Stream::Baseline);
  const DenseNet net = random_net(rng, {3, 4, 2});
  const Eigen::VectorXd in = Eigen::Vector3d(0.5, -0.1, 0.9);
  CHECK(dense_backprop(net, in, Eigen::VectorXd::Zero(2)).isZero());

  // Linear single layer with loss = output: dW_ij = x_j, db_i = 1.
  const DenseNet lin = random_net(rng, {3, 1});
  const auto g = dense_backprop(lin, in, Eigen::VectorXd::Ones(1));
  CHECK(g.head(3) == in);
  CHECK(g(3) == 1.0);

  for (int t = 0; t < 30; ++t) {
    const DenseNet n = random_net(rng, {3, 1 + static_cast<int>(uniform_index(rng, 5)), 4, 2});
    Eigen::VectorXd x(3), og(2);
    for (auto& v : x) v = uniform(rng, -1, 1);
    for (auto& v : og) v = uniform(rng, -1, 1);
    const auto analytic = dense_backprop(n, x, og);
    const Eigen::VectorXd p = n.flat();
    DenseNet probe = n;
    const double h = 1e-6;
    double worst = 0;
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      Eigen::VectorXd q = p;
      q(j) += h;
      probe.set_flat(q);
      const double plus = og.dot(dense_forward(probe, x));
      q(j) -= 2 * h;
      probe.set_flat(q);
      const double minus = og.dot(dense_forward(probe, x));
      worst = std::max(worst, std::abs((plus - minus) / (2 * h) - analytic(j)));
    }
    CHECK(worst <= 1e-6);
  }
  CHECK_THROWS_AS(dense_backprop(net, in, Eigen::VectorXd::Zero(3)), DimensionError);
}

TEST_CASE("dense parameter accounting") {
  const DenseNet net = DenseNet::zeros({4, 7, 3});
  CHECK(net.param_count() == 5 * 7 + 8 * 3);
  Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(net.param_count(), 0, 1);
  DenseNet copy = net;
  copy.set_flat(p);
  CHECK(copy.flat() == p);
  CHECK_THROWS_AS(copy.set_flat(Eigen::VectorXd::Zero(3)), DimensionError);
  CHECK_THROWS_AS(DenseNet::zeros({4}), DimensionError);
}

TEST_CASE("build_matched_baseline") {
  const auto small = build_matched_baseline(110, 4, 4);
  CHECK(small.total() >= 105);
  CHECK(small.total() <= 116);
  CHECK(small.critic.input_size() == 8);

  const auto pair = build_matched_baseline(110, 4, 4, 2);
  CHECK(pair.actors.size() == 2);
  CHECK(std::abs(pair.total() - 110) <= 5.5);

  const auto large = build_matched_baseline(40000, 4, 4, 2);
  CHECK(std::abs(large.total() - 40000) <= 2000);
  CHECK(large.actors[0].layer_sizes.size() == 4);
  CHECK(build_matched_baseline(40000, 4, 4).total() == doctest::Approx(40000).epsilon(0.05));

  try {
    build_matched_baseline(110, 16, 1 << 16);
    FAIL("expected BudgetInfeasible");
  } catch (const BudgetInfeasible& e) {
    CHECK(e.minimum() >= (1 << 16));
  }
  CHECK_THROWS_AS(build_matched_baseline(40000, 16, 1 << 16), BudgetInfeasible);
}

TEST_CASE("random policy") {
  Rng rng = make_rng(3, Stream::Baseline);
  for (int i = 0; i < 100; ++i) CHECK(random_policy(1, rng) == 0);
  std::vector<int> counts(4);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(random_policy(4, rng))];
  for (int c : counts) CHECK(std::abs(c / double(n) - 0.25) <= 0.01);

  RandomAgent agent(8);
  CHECK(agent.param_report().total() == 0);
  CHECK(agent.act(0, Eigen::VectorXd::Zero(2), rng).log_prob == doctest::Approx(-std::log(8.0)));
  CHECK_THROWS_AS(random_policy(0, rng), ActionError);
}

TEST_CASE("iql_update") {
  QTable t{2, 0.0, 0.1, {}};
  iql_update(t, {0, 1, 1.0, 0, true}, 0.9);
  CHECK(t.row(0).isZero());

  t.learning_rate = 0.25;
  iql_update(t, {0, 1, 1.0, 0, true}, 0.9);
  CHECK(t.row(0)(1) == doctest::Approx(0.25));
  CHECK(t.row(0)(0) == 0.0);

  // Bootstrapped target uses max over the next state's row.
  QTable b{2, 0.5, 0.0, {}};
  b.values[7] = Eigen::Vector2d(0.0, 2.0);
  iql_update(b, {3, 0, 1.0, 7, false}, 0.5);
  CHECK(b.row(3)(0) == doctest::Approx(0.5 * (1.0 + 0.5 * 2.0)));

  // Two-armed bandit: greedy choice settles on the better arm.
  QTable q{2, 0.1, 0.2, {}};
  Rng rng = make_rng(4, Stream::Baseline);
  for (int i = 0; i < 2000; ++i) {
    const int a = iql_act(q, 0, rng);
    iql_update(q, {0, a, a == 1 ? 0.8 : 0.3, 0, true}, 0.9);
  }
  CHECK(q.row(0)(1) > q.row(0)(0));
  CHECK(q.row(0)(1) == doctest::Approx(0.8).epsilon(0.01));

  // Epsilon-greedy log-probabilities form a distribution.
  double total = 0;
  for (int a = 0; a < 2; ++a) total += std::exp(iql_log_prob(q, 0, a));
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("observation buckets") {
  CHECK(bucket(Eigen::Vector2d(0.0, 0.0)) == 0);
  CHECK(bucket(Eigen::Vector2d(1.0, 1.0)) == 24);
  CHECK(bucket(Eigen::Vector2d(0.39, 0.41)) == 1 * 5 + 2);
  CHECK(bucket(Eigen::Vector2d(-3.0, 7.0)) == 4);

  IqlAgent factory(2, 4, 4, 0.1, 0.1, false);
  CHECK(factory.param_report().total() == 2 * 625 * 4);
  IqlAgent bandit(1, 16, 1 << 16, 0.1, 0.1, true);
  CHECK(bandit.param_report().total() == (1 << 16));
}

TEST_CASE("classical and hybrid agents") {
  auto classical = make_classical_agent("classical110", 110, 2, 4, 4, 0.01, 5);
  CHECK(std::abs(classical->param_report().total() - 110) <= 5.5);
  auto big = make_classical_agent("classical40k", 40000, 2, 4, 4, 0.01, 5);
  CHECK(std::abs(big->param_report().total() - 40000) <= 2000);

  marl::QuantumAgentSpec spec;
  auto hybrid = make_hybrid_agent(spec, 4, 110, 5);
  const long long total = hybrid->param_report().total();
  CHECK(total >= 105);
  CHECK(total <= 116);

  // Composition: the hybrid's actors are the quantum actors built from the same seed.
  auto quantum = marl::make_quantum_agent(spec, 5);
  const Eigen::VectorXd obs = Eigen::Vector4d(0.2, 0.1, 0.4, 0.5);
  CHECK(hybrid->actor(1).policy(obs).probabilities() == quantum->actor(1).policy(obs).probabilities());
  const auto& critic = dynamic_cast<const DenseCritic&>(hybrid->critic());
  const Eigen::VectorXd summary = Eigen::VectorXd::Constant(8, 0.3);
  CHECK(critic.value(summary) == dense_forward(critic.net(), summary)(0));

  CHECK_THROWS_AS(make_classical_agent("classical110", 110, 1, 16, 1 << 16, 0.01, 1), BudgetInfeasible);
}

TEST_CASE("dense agents train on the factory") {
  auto env = envs::make_factory({});
  marl::TrainSettings s;
  s.epochs = 100;
  s.episodes_per_epoch = 2;
  s.batch_episodes = 2;
  auto hybrid = make_hybrid_agent({}, 4, 110, 1);
  const auto m = marl::train(*env, *hybrid, s, 3);
  CHECK(m.size() == 100);
  for (const auto& row : m) {
    CHECK(std::isfinite(row.actor_loss));
    CHECK(std::isfinite(row.critic_loss));
  }
  s.epochs = 20;
  auto classical = make_classical_agent("classical110", 110, 2, 4, 4, 0.01, 2);
  CHECK(marl::train(*env, *classical, s, 3).size() == 20);
  IqlAgent iql(2, 4, 4, 0.1, 0.1, false);
  CHECK(marl::train(*env, iql, s, 3).size() == 20);
}
