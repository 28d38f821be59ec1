#include "qmarl/marl.hpp"

#include <chrono>
#include <cmath>

#include "qmarl/error.hpp"

namespace qmarl::marl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Trajectory t) {
  if (t.records.empty()) throw DataError("cannot store an empty trajectory");
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(std::move(t));
}

std::vector<Trajectory> ReplayBuffer::recent(std::size_t n) const {
  n = std::min(n, entries_.size());
  return {entries_.end() - static_cast<std::ptrdiff_t>(n), entries_.end()};
}

long long ParamReport::total() const {
  long long t = 0;
  for (const auto& n : networks) t += n.params;
  return t;
}

// ------------------------------------------------------------ quantum parts

QuantumActor::QuantumActor(vqc::CircuitTemplate tmpl, vqc::ReadoutMode readout, int action_dim, double learning_rate,
                           Rng& init, std::shared_ptr<SharedScale> beta)
    : tmpl_(std::move(tmpl)),
      readout_(std::move(readout)),
      action_dim_(action_dim),
      params_(vqc::init_params(tmpl_, init)),
      optimizer_(pshift::OptimizerState::for_size(tmpl_.param_slots(), learning_rate)),
      beta_(std::move(beta)) {
  if (std::holds_alternative<vqc::ExpectationSoftmax>(readout_) && !beta_)
    throw ConfigError("softmax readout needs a temperature");
  vqc::check_readout(tmpl_, this->readout(), action_dim_);
}

vqc::ReadoutMode QuantumActor::readout() const {
  if (std::holds_alternative<vqc::ExpectationSoftmax>(readout_)) return vqc::ExpectationSoftmax{beta_->value};
  return readout_;
}

vqc::ActionDistribution QuantumActor::policy(const Observation& obs) const {
  const double beta = beta_ ? beta_->value : 0.0;
  if (memo_ && memo_->beta == beta && memo_->obs.size() == obs.size() && memo_->obs == obs) return memo_->dist;
  auto dist = vqc::actor_forward(tmpl_, params_, obs, readout(), action_dim_);
  memo_ = Memo{obs, beta, dist};
  return dist;
}

double QuantumActor::update(std::span<const pshift::ActorSample> batch) {
  const auto r = pshift::actor_loss_gradient(batch, tmpl_, params_, readout(), action_dim_);
  memo_.reset();
  std::tie(params_, optimizer_) = pshift::optimizer_step(params_, r.grad, std::move(optimizer_));
  if (beta_ && beta_->trainable && std::holds_alternative<vqc::ExpectationSoftmax>(readout_)) {
    Eigen::VectorXd b(1), g(1);
    b << beta_->value;
    g << r.grad_beta;
    auto [next, state] = pshift::optimizer_step(b, g, std::move(beta_->optimizer));
    beta_->value = next(0);
    beta_->optimizer = std::move(state);
  }
  return r.loss;
}

QuantumCritic::QuantumCritic(vqc::CircuitTemplate tmpl, double v_scale, double learning_rate, Rng& init)
    : tmpl_(std::move(tmpl)),
      params_(vqc::init_params(tmpl_, init)),
      v_scale_(v_scale),
      optimizer_(pshift::OptimizerState::for_size(tmpl_.param_slots() + 1, learning_rate)) {}

double QuantumCritic::value(const Observation& summary) const {
  if (memo_ && memo_->first.size() == summary.size() && memo_->first == summary) return memo_->second;
  const double v = vqc::critic_forward(tmpl_, params_, summary, v_scale_);
  memo_.emplace(summary, v);
  return v;
}

double QuantumCritic::update(std::span<const pshift::CriticSample> batch) {
  const auto r = pshift::critic_loss_gradient(batch, tmpl_, params_, v_scale_);
  memo_.reset();
  const Eigen::Index p = params_.size();
  Eigen::VectorXd all(p + 1), grad(p + 1);
  all << params_, v_scale_;
  grad << r.grad, r.grad_v_scale;
  auto [next, state] = pshift::optimizer_step(all, grad, std::move(optimizer_));
  params_ = next.head(p);
  v_scale_ = next(p);
  optimizer_ = std::move(state);
  return r.loss;
}

// ------------------------------------------------------------ actor-critic

ActorCriticAgent::ActorCriticAgent(std::string kind, std::vector<std::unique_ptr<ActorModel>> actors,
                                   std::unique_ptr<CriticModel> critic, ParamReport report)
    : kind_(std::move(kind)), actors_(std::move(actors)), critic_(std::move(critic)), report_(std::move(report)) {
  if (actors_.empty()) throw ConfigError("actor-critic agent needs at least one actor");
}

PolicySample ActorCriticAgent::act(int agent, const Observation& obs, Rng& rng) const {
  const auto d = actors_.at(static_cast<std::size_t>(agent))->policy(obs);
  const int a = d.sample(rng);
  return {a, d.log_prob(a)};
}

UpdateStats ActorCriticAgent::update(std::span<const Trajectory> batch, double gamma) {
  if (batch.empty()) throw BatchError("empty training batch");
  std::vector<std::vector<double>> returns;
  std::vector<pshift::CriticSample> critic_batch;
  for (const auto& traj : batch) {
    returns.push_back(compute_returns(traj, gamma).returns);
    for (std::size_t t = 0; t < traj.records.size(); ++t)
      critic_batch.push_back({traj.records[t].joint_summary, returns.back()[t]});
  }
  UpdateStats stats;
  stats.critic_loss = critic_->update(critic_batch);

  std::vector<std::vector<pshift::ActorSample>> per_agent(actors_.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& traj = batch[i];
    auto& samples = per_agent.at(static_cast<std::size_t>(traj.agent_id));
    for (std::size_t t = 0; t < traj.records.size(); ++t) {
      const auto& r = traj.records[t];
      samples.push_back({r.obs, r.action, returns[i][t] - critic_->value(r.joint_summary)});
    }
  }
  int updated = 0;
  for (std::size_t a = 0; a < actors_.size(); ++a) {
    if (per_agent[a].empty()) continue;
    stats.actor_loss += actors_[a]->update(per_agent[a]);
    ++updated;
  }
  if (updated) stats.actor_loss /= updated;
  return stats;
}

std::pair<std::vector<std::unique_ptr<ActorModel>>, ParamReport> make_quantum_actors(const QuantumAgentSpec& spec,
                                                                                     std::uint64_t seed) {
  if (spec.n_agents < 1) throw ConfigError("need at least one agent");
  std::shared_ptr<SharedScale> beta;
  vqc::ReadoutMode readout = vqc::ExpectationSoftmax{spec.beta};
  if (spec.pvm) {
    readout = vqc::pvm_for_actions(spec.action_dim);
  } else {
    beta = std::make_shared<SharedScale>();
    beta->value = spec.beta;
    beta->optimizer = pshift::OptimizerState::for_size(1, spec.learning_rate);
  }
  std::vector<std::unique_ptr<ActorModel>> actors;
  ParamReport report;
  for (int i = 0; i < spec.n_agents; ++i) {
    Rng init = make_rng(seed, Stream::ActorInit, {static_cast<std::uint64_t>(i)});
    auto actor = std::make_unique<QuantumActor>(vqc::CircuitTemplate::layered(spec.actor_qubits, spec.actor_layers),
                                                readout, spec.action_dim, spec.learning_rate, init, beta);
    report.networks.push_back({"actor" + std::to_string(i), actor->param_count()});
    actors.push_back(std::move(actor));
  }
  if (beta) report.networks.push_back({"softmax_beta", 1});
  return {std::move(actors), std::move(report)};
}

std::unique_ptr<ActorCriticAgent> make_quantum_agent(const QuantumAgentSpec& spec, std::uint64_t seed) {
  auto [actors, report] = make_quantum_actors(spec, seed);
  Rng init = make_rng(seed, Stream::CriticInit);
  auto critic = std::make_unique<QuantumCritic>(
      vqc::CircuitTemplate::layered(spec.critic_qubits, spec.critic_layers, vqc::Encoding::Dense), spec.v_scale,
      spec.learning_rate, init);
  report.networks.push_back({"critic", critic->param_count()});
  report.networks.push_back({"value_scale", 1});
  return std::make_unique<ActorCriticAgent>("quantum", std::move(actors), std::move(critic), std::move(report));
}

// -------------------------------------------------------------- training

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  if (!(gamma >= 0 && gamma <= 1)) throw ConfigError("gamma must lie in [0, 1]");
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    out[t] = acc;
  }
  return out;
}

ReturnsAndAdvantages compute_returns(const Trajectory& traj, double gamma,
                                     const std::function<double(const Observation&)>& value) {
  std::vector<double> rewards;
  rewards.reserve(traj.records.size());
  for (const auto& r : traj.records) rewards.push_back(r.reward);
  ReturnsAndAdvantages out;
  out.returns = discounted_returns(rewards, gamma);
  out.advantages = out.returns;
  if (value)
    for (std::size_t t = 0; t < traj.records.size(); ++t) out.advantages[t] -= value(traj.records[t].joint_summary);
  return out;
}

std::vector<Trajectory> collect_episode(envs::Environment& env, const Agent& agent, std::uint64_t env_seed,
                                        Rng& policy_rng) {
  const int n = env.n_agents();
  std::vector<Trajectory> trajs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) trajs[static_cast<std::size_t>(i)].agent_id = i;

  auto obs = env.reset(env_seed);
  std::vector<int> actions(static_cast<std::size_t>(n));
  std::vector<double> log_probs(static_cast<std::size_t>(n));
  bool done = false;
  while (!done) {
    const Observation summary = vqc::joint_summary(obs);
    for (int i = 0; i < n; ++i) {
      const auto s = agent.act(i, obs[static_cast<std::size_t>(i)], policy_rng);
      actions[static_cast<std::size_t>(i)] = s.action;
      log_probs[static_cast<std::size_t>(i)] = s.log_prob;
    }
    auto step = env.step(actions);
    done = step.done;
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
      Record r;
      r.obs = obs[i];
      r.action = actions[i];
      r.reward = step.rewards[i];
      r.log_prob = log_probs[i];
      r.joint_summary = summary;
      r.next_obs = step.observations[i];
      r.done = done;
      trajs[i].episode_return += r.reward;
      trajs[i].records.push_back(std::move(r));
    }
    obs = std::move(step.observations);
  }
  return trajs;
}

std::vector<TrainMetrics> train(envs::Environment& env, Agent& agent, const TrainSettings& settings,
                                std::uint64_t seed, const MetricsSink& sink) {
  if (settings.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (settings.episodes_per_epoch < 1) throw ConfigError("episodes_per_epoch must be positive");
  if (settings.batch_episodes < 1) throw ConfigError("batch_episodes must be positive");
  const auto batch_size = static_cast<std::size_t>(settings.batch_episodes * env.n_agents());
  if (settings.buffer_capacity < batch_size) throw ConfigError("buffer_capacity smaller than one batch");

  ReplayBuffer buffer(settings.buffer_capacity);
  std::vector<TrainMetrics> metrics;
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double reward_sum = 0.0;
    for (int e = 0; e < settings.episodes_per_epoch; ++e) {
      const std::initializer_list<std::uint64_t> path = {static_cast<std::uint64_t>(epoch),
                                                         static_cast<std::uint64_t>(e)};
      Rng policy_rng = make_rng(seed, Stream::Policy, path);
      auto trajs = collect_episode(env, agent, derive_seed(seed, Stream::Episode, path), policy_rng);
      for (auto& t : trajs) {
        reward_sum += t.episode_return;
        buffer.push(std::move(t));
      }
    }
    const auto batch = buffer.recent(batch_size);
    const auto stats = agent.update(batch, settings.gamma);

    TrainMetrics m;
    m.epoch = epoch;
    m.total_reward = reward_sum / settings.episodes_per_epoch;
    m.actor_loss = stats.actor_loss;
    m.critic_loss = stats.critic_loss;
    if (settings.record_wallclock)
      m.wallclock_ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    if (sink) sink(m);
    metrics.push_back(m);
  }
  return metrics;
}

}  // namespace qmarl::marl
