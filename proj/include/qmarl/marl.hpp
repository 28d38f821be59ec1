#pragma once

// Centralized-training / distributed-execution actor-critic loop.

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qmarl/envs.hpp"
#include "qmarl/pshift.hpp"
#include "qmarl/vqc.hpp"

namespace qmarl::marl {

using vqc::Observation;

struct Record {
  Observation obs;
  int action = 0;
  double reward = 0.0;
  double log_prob = 0.0;
  Observation joint_summary;
  Observation next_obs;
  bool done = false;
};

struct Trajectory {
  int agent_id = 0;
  std::vector<Record> records;
  double episode_return = 0.0;
};

/// Bounded FIFO of trajectories; the oldest entry is evicted first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Trajectory t);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Trajectory& operator[](std::size_t i) const { return entries_[i]; }
  /// The `n` most recently pushed trajectories, oldest first.
  std::vector<Trajectory> recent(std::size_t n) const;

 private:
  std::size_t capacity_;
  std::deque<Trajectory> entries_;
};

struct TrainMetrics {
  int epoch = 0;
  double total_reward = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  std::int64_t wallclock_ms = 0;
};

struct PolicySample {
  int action = 0;
  double log_prob = 0.0;
};

struct UpdateStats {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
};

struct NetworkCount {
  std::string name;
  long long params = 0;
};

struct ParamReport {
  std::vector<NetworkCount> networks;
  long long total() const;
};

/// Common surface of the quantum agent and every baseline.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string kind() const = 0;
  virtual ParamReport param_report() const = 0;
  virtual PolicySample act(int agent, const Observation& obs, Rng& rng) const = 0;
  /// `batch` holds per-agent trajectories from the most recent episodes.
  virtual UpdateStats update(std::span<const Trajectory> batch, double gamma) = 0;
};

// ------------------------------------------------------------ actor-critic

class ActorModel {
 public:
  virtual ~ActorModel() = default;
  virtual vqc::ActionDistribution policy(const Observation& obs) const = 0;
  /// One optimizer step on the policy-gradient loss; returns the loss.
  virtual double update(std::span<const pshift::ActorSample> batch) = 0;
  virtual long long param_count() const = 0;
};

class CriticModel {
 public:
  virtual ~CriticModel() = default;
  virtual double value(const Observation& summary) const = 0;
  virtual double update(std::span<const pshift::CriticSample> batch) = 0;
  virtual long long param_count() const = 0;
};

/// Trainable softmax temperature shared by every actor of one agent group.
struct SharedScale {
  double value = vqc::kDefaultBeta;
  pshift::OptimizerState optimizer = pshift::OptimizerState::for_size(1, 0.01);
  bool trainable = true;
};

class QuantumActor final : public ActorModel {
 public:
  QuantumActor(vqc::CircuitTemplate tmpl, vqc::ReadoutMode readout, int action_dim, double learning_rate, Rng& init,
               std::shared_ptr<SharedScale> beta);

  vqc::ActionDistribution policy(const Observation& obs) const override;
  double update(std::span<const pshift::ActorSample> batch) override;
  long long param_count() const override { return tmpl_.param_slots(); }

  const vqc::CircuitTemplate& circuit() const { return tmpl_; }
  const vqc::ParamVector& params() const { return params_; }
  vqc::ReadoutMode readout() const;

 private:
  vqc::CircuitTemplate tmpl_;
  vqc::ReadoutMode readout_;
  int action_dim_;
  vqc::ParamVector params_;
  pshift::OptimizerState optimizer_;
  std::shared_ptr<SharedScale> beta_;
  // Last evaluated (obs, beta) and its policy; cleared by update().
  struct Memo {
    Observation obs;
    double beta = 0.0;
    vqc::ActionDistribution dist;
  };
  mutable std::optional<Memo> memo_;
};

class QuantumCritic final : public CriticModel {
 public:
  QuantumCritic(vqc::CircuitTemplate tmpl, double v_scale, double learning_rate, Rng& init);

  double value(const Observation& summary) const override;
  double update(std::span<const pshift::CriticSample> batch) override;
  /// Circuit slots only; the value scale is reported separately.
  long long param_count() const override { return tmpl_.param_slots(); }
  double v_scale() const { return v_scale_; }

 private:
  vqc::CircuitTemplate tmpl_;
  vqc::ParamVector params_;
  double v_scale_;
  pshift::OptimizerState optimizer_;  // over [params; v_scale]
  mutable std::optional<std::pair<Observation, double>> memo_;
};

/// Critic update, then one update per actor, on the same batch.
class ActorCriticAgent final : public Agent {
 public:
  ActorCriticAgent(std::string kind, std::vector<std::unique_ptr<ActorModel>> actors,
                   std::unique_ptr<CriticModel> critic, ParamReport report);

  std::string kind() const override { return kind_; }
  ParamReport param_report() const override { return report_; }
  PolicySample act(int agent, const Observation& obs, Rng& rng) const override;
  UpdateStats update(std::span<const Trajectory> batch, double gamma) override;

  const ActorModel& actor(int i) const { return *actors_[static_cast<std::size_t>(i)]; }
  const CriticModel& critic() const { return *critic_; }

 private:
  std::string kind_;
  std::vector<std::unique_ptr<ActorModel>> actors_;
  std::unique_ptr<CriticModel> critic_;
  ParamReport report_;
};

struct QuantumAgentSpec {
  int n_agents = 2;
  int action_dim = 4;
  int actor_qubits = 4;
  int actor_layers = 3;
  int critic_qubits = 4;
  int critic_layers = 3;
  /// Softmax readout when false; PVM over the first log2(action_dim) wires when true.
  bool pvm = false;
  double beta = vqc::kDefaultBeta;
  double v_scale = vqc::kDefaultValueScale;
  double learning_rate = 0.01;
};

/// Independent actor parameters per agent, one shared temperature, one critic.
std::unique_ptr<ActorCriticAgent> make_quantum_agent(const QuantumAgentSpec& spec, std::uint64_t seed);

/// Quantum actors built exactly like make_quantum_agent, with their report entries.
std::pair<std::vector<std::unique_ptr<ActorModel>>, ParamReport> make_quantum_actors(const QuantumAgentSpec& spec,
                                                                                     std::uint64_t seed);

// -------------------------------------------------------------- training

struct ReturnsAndAdvantages {
  std::vector<double> returns;
  std::vector<double> advantages;
};

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

/// Advantages use `value` when given, otherwise equal the returns.
ReturnsAndAdvantages compute_returns(const Trajectory& traj, double gamma,
                                     const std::function<double(const Observation&)>& value = {});

/// Resets `env` with `env_seed`, steps it to completion sampling each
/// agent's action from `agent`, and returns one trajectory per agent.
std::vector<Trajectory> collect_episode(envs::Environment& env, const Agent& agent, std::uint64_t env_seed,
                                        Rng& policy_rng);

struct TrainSettings {
  int epochs = 1000;
  int episodes_per_epoch = 8;
  double gamma = 0.99;
  std::size_t buffer_capacity = 64;
  /// Episodes per update batch.
  int batch_episodes = 8;
  bool record_wallclock = false;
};

using MetricsSink = std::function<void(const TrainMetrics&)>;

/// Runs the epoch loop; every row is passed to `sink` as soon as it exists.
std::vector<TrainMetrics> train(envs::Environment& env, Agent& agent, const TrainSettings& settings,
                                std::uint64_t seed, const MetricsSink& sink = {});

}  // namespace qmarl::marl
