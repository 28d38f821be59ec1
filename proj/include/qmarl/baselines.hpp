#pragma once

// Comparison agents: dense-network actor-critic at fixed parameter budgets,
// quantum actors with a dense critic, independent Q-learning, random walk.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "qmarl/error.hpp"
#include "qmarl/marl.hpp"
#include "qmarl/rng.hpp"

namespace qmarl::baselines {

// ---------------------------------------------------------------- DenseNet

/// tanh hidden layers, linear output layer. Flat parameter order is, per
/// layer, the column-major weight matrix followed by the bias.
template <typename Scalar>
struct BasicDenseNet {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<int> layer_sizes;
  std::vector<Matrix> weights;  // weights[l] is out x in
  std::vector<Vector> biases;

  static BasicDenseNet zeros(std::vector<int> sizes) {
    if (sizes.size() < 2) throw DimensionError("a dense net needs at least input and output sizes");
    for (int s : sizes)
      if (s < 1) throw DimensionError("dense layer sizes must be positive");
    BasicDenseNet net;
    net.layer_sizes = std::move(sizes);
    for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
      net.weights.push_back(Matrix::Zero(net.layer_sizes[l + 1], net.layer_sizes[l]));
      net.biases.push_back(Vector::Zero(net.layer_sizes[l + 1]));
    }
    return net;
  }

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  std::size_t n_layers() const { return weights.size(); }

  long long param_count() const { return count_for(layer_sizes); }

  static long long count_for(const std::vector<int>& sizes) {
    long long total = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
      total += static_cast<long long>(sizes[l] + 1) * sizes[l + 1];
    return total;
  }

  Vector flat() const {
    Vector out(param_count());
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < n_layers(); ++l) {
      out.segment(at, weights[l].size()) = weights[l].reshaped();
      at += weights[l].size();
      out.segment(at, biases[l].size()) = biases[l];
      at += biases[l].size();
    }
    return out;
  }

  void set_flat(const Vector& p) {
    if (p.size() != param_count()) throw DimensionError("flat parameter length does not match the network");
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < n_layers(); ++l) {
      weights[l].reshaped() = p.segment(at, weights[l].size());
      at += weights[l].size();
      biases[l] = p.segment(at, biases[l].size());
      at += biases[l].size();
    }
  }
};

using DenseNet = BasicDenseNet<double>;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
DenseNet init_dense(std::vector<int> sizes, Rng& rng);

template <typename Scalar>
typename BasicDenseNet<Scalar>::Vector dense_forward(const BasicDenseNet<Scalar>& net,
                                                     const typename BasicDenseNet<Scalar>::Vector& input) {
  if (input.size() != net.input_size()) throw DimensionError("dense_forward: input length mismatch");
  typename BasicDenseNet<Scalar>::Vector a = input;
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    a = net.weights[l] * a + net.biases[l];
    if (l + 1 < net.n_layers()) a = a.array().tanh().matrix();
  }
  return a;
}

/// Gradient of <output_gradient, dense_forward(net, input)> w.r.t. the flat parameters.
template <typename Scalar>
typename BasicDenseNet<Scalar>::Vector dense_backprop(const BasicDenseNet<Scalar>& net,
                                                      const typename BasicDenseNet<Scalar>::Vector& input,
                                                      const typename BasicDenseNet<Scalar>::Vector& output_gradient) {
  using Vector = typename BasicDenseNet<Scalar>::Vector;
  if (input.size() != net.input_size()) throw DimensionError("dense_backprop: input length mismatch");
  if (output_gradient.size() != net.output_size())
    throw DimensionError("dense_backprop: output gradient length mismatch");

  std::vector<Vector> acts{input};
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    Vector z = net.weights[l] * acts.back() + net.biases[l];
    if (l + 1 < net.n_layers()) z = z.array().tanh().matrix();
    acts.push_back(std::move(z));
  }

  Vector grad(net.param_count());
  Eigen::Index end = grad.size();
  Vector delta = output_gradient;
  for (std::size_t l = net.n_layers(); l-- > 0;) {
    const auto& w = net.weights[l];
    end -= w.rows();
    grad.segment(end, w.rows()) = delta;
    end -= w.size();
    grad.segment(end, w.size()) = (delta * acts[l].transpose()).reshaped();
    if (l > 0) delta = ((w.transpose() * delta).array() * (Scalar(1) - acts[l].array().square())).matrix();
  }
  return grad;
}

// ------------------------------------------------------------ budgets

struct MatchedBaseline {
  std::vector<DenseNet> actors;
  DenseNet critic;
  long long total() const;
};

/// Layer sizes only; weights are zero until initialised by the agent.
/// Actors map obs_dim to action_dim; the critic maps the 2*obs_dim joint
/// summary to one value. Budgets below 2000 use at most one hidden layer per
/// network, larger ones two equal-width hidden layers everywhere. The result
/// is within 5% of `budget` or BudgetInfeasible is thrown.
MatchedBaseline build_matched_baseline(long long budget, int obs_dim, std::int64_t action_dim, int n_actors = 1);

/// Dense critic (2*obs_dim -> h -> 1) closest to `budget`.
DenseNet build_critic_for_budget(long long budget, int obs_dim);

// --------------------------------------------------------------- agents

class DenseActor final : public marl::ActorModel {
 public:
  DenseActor(DenseNet net, double learning_rate);
  vqc::ActionDistribution policy(const marl::Observation& obs) const override;
  double update(std::span<const pshift::ActorSample> batch) override;
  long long param_count() const override { return net_.param_count(); }
  const DenseNet& net() const { return net_; }

 private:
  DenseNet net_;
  pshift::OptimizerState optimizer_;
};

class DenseCritic final : public marl::CriticModel {
 public:
  DenseCritic(DenseNet net, double learning_rate);
  double value(const marl::Observation& summary) const override;
  double update(std::span<const pshift::CriticSample> batch) override;
  long long param_count() const override { return net_.param_count(); }
  const DenseNet& net() const { return net_; }

 private:
  DenseNet net_;
  pshift::OptimizerState optimizer_;
};

/// Dense actor-critic at a fixed budget (110 or 40000 for the presets).
std::unique_ptr<marl::ActorCriticAgent> make_classical_agent(const std::string& kind, long long budget, int n_agents,
                                                             int obs_dim, std::int64_t action_dim,
                                                             double learning_rate, std::uint64_t seed);

/// Quantum actors from `spec`, dense critic filling the rest of `budget`.
std::unique_ptr<marl::ActorCriticAgent> make_hybrid_agent(const marl::QuantumAgentSpec& spec, int obs_dim,
                                                          long long budget, std::uint64_t seed);

// ------------------------------------------------------------------ IQL

struct QTable {
  std::int64_t action_dim = 0;
  double learning_rate = 0.1;
  double epsilon = 0.1;
  std::map<std::uint64_t, Eigen::VectorXd> values;  // bucket key -> Q(s, .)

  /// Zero row for unseen buckets.
  Eigen::VectorXd row(std::uint64_t key) const;
};

inline constexpr int kBucketLevels = 5;

/// Each component clamped to [0, 1] and quantised to kBucketLevels levels.
std::uint64_t bucket(const marl::Observation& obs);

struct Transition {
  std::uint64_t state = 0;
  int action = 0;
  double reward = 0.0;
  std::uint64_t next_state = 0;
  bool terminal = false;
};

/// Q(s,a) += lr * (r + gamma * max_a' Q(s',a') - Q(s,a)); returns the TD error.
double iql_update(QTable& table, const Transition& t, double gamma);

/// Epsilon-greedy with uniform tie-breaking among greedy actions.
int iql_act(const QTable& table, std::uint64_t state, Rng& rng);
double iql_log_prob(const QTable& table, std::uint64_t state, int action);

class IqlAgent final : public marl::Agent {
 public:
  /// `single_state` maps every observation to one bucket (the bandit case).
  IqlAgent(int n_agents, int obs_dim, std::int64_t action_dim, double learning_rate, double epsilon,
           bool single_state);
  std::string kind() const override { return "iql"; }
  marl::ParamReport param_report() const override;
  marl::PolicySample act(int agent, const marl::Observation& obs, Rng& rng) const override;
  /// Actor loss is reported as 0; critic loss is the mean squared TD error.
  marl::UpdateStats update(std::span<const marl::Trajectory> batch, double gamma) override;
  const QTable& table(int agent) const { return tables_.at(static_cast<std::size_t>(agent)); }

 private:
  std::uint64_t key(const marl::Observation& obs) const { return single_state_ ? 0 : bucket(obs); }

  int obs_dim_;
  bool single_state_;
  std::vector<QTable> tables_;
};

// --------------------------------------------------------------- random

int random_policy(std::int64_t action_dim, Rng& rng);

class RandomAgent final : public marl::Agent {
 public:
  explicit RandomAgent(std::int64_t action_dim);
  std::string kind() const override { return "random"; }
  marl::ParamReport param_report() const override { return {}; }
  marl::PolicySample act(int agent, const marl::Observation& obs, Rng& rng) const override;
  marl::UpdateStats update(std::span<const marl::Trajectory>, double) override { return {}; }

 private:
  std::int64_t action_dim_;
};

}  // namespace qmarl::baselines
