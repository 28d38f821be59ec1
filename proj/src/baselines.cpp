#include "qmarl/baselines.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>

namespace qmarl::baselines {
namespace {

constexpr long long kTwoHiddenThreshold = 2000;
constexpr double kBudgetTolerance = 0.05;

std::vector<int> one_hidden(int in, int hidden, int out) {
  if (hidden == 0) return {in, out};
  return {in, hidden, out};
}

bool within_tolerance(long long total, long long budget) {
  return std::llabs(total - budget) <= kBudgetTolerance * static_cast<double>(budget);
}

std::string budget_message(long long budget, long long best, long long minimum) {
  return "parameter budget " + std::to_string(budget) + " is infeasible: closest count " + std::to_string(best) +
         ", minimum representable " + std::to_string(minimum);
}

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

}  // namespace

DenseNet init_dense(std::vector<int> sizes, Rng& rng) {
  DenseNet net = DenseNet::zeros(std::move(sizes));
  for (auto& w : net.weights) {
    const double r = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng, -r, r);
  }
  return net;
}

long long MatchedBaseline::total() const {
  long long t = critic.param_count();
  for (const auto& a : actors) t += a.param_count();
  return t;
}

MatchedBaseline build_matched_baseline(long long budget, int obs_dim, std::int64_t action_dim, int n_actors) {
  if (budget < 1) throw ConfigError("parameter budget must be positive");
  if (obs_dim < 1 || action_dim < 1 || n_actors < 1) throw DimensionError("baseline shapes must be positive");
  if (action_dim > std::numeric_limits<int>::max()) throw DimensionError("action dimension too large");
  const int a = static_cast<int>(action_dim);
  const int summary = 2 * obs_dim;
  const long long n = n_actors;

  if (budget < kTwoHiddenThreshold) {
    auto actor_count = [&](int h) { return DenseNet::count_for(one_hidden(obs_dim, h, a)); };
    auto critic_count = [&](int h) { return DenseNet::count_for(one_hidden(summary, h, 1)); };
    const long long minimum = n * std::min(actor_count(0), actor_count(1)) + std::min(critic_count(0), critic_count(1));

    long long best_total = -1;
    int best_h = 0, best_hc = 0;
    for (int h = 0; n * actor_count(h) <= 2 * budget || h < 2; ++h) {
      for (int hc = 0; critic_count(hc) <= 2 * budget || hc < 2; ++hc) {
        const long long total = n * actor_count(h) + critic_count(hc);
        if (best_total < 0 || std::llabs(total - budget) < std::llabs(best_total - budget)) {
          best_total = total;
          best_h = h;
          best_hc = hc;
        }
      }
    }
    if (!within_tolerance(best_total, budget))
      throw BudgetInfeasible(budget_message(budget, best_total, minimum), minimum);
    MatchedBaseline out{{}, DenseNet::zeros(one_hidden(summary, best_hc, 1))};
    for (int i = 0; i < n_actors; ++i) out.actors.push_back(DenseNet::zeros(one_hidden(obs_dim, best_h, a)));
    return out;
  }

  auto total_for = [&](int h) {
    return n * DenseNet::count_for({obs_dim, h, h, a}) + DenseNet::count_for({summary, h, h, 1});
  };
  const long long minimum = total_for(1);
  int best_h = 1;
  for (int h = 1; total_for(h) <= 2 * budget; ++h)
    if (std::llabs(total_for(h) - budget) < std::llabs(total_for(best_h) - budget)) best_h = h;
  if (!within_tolerance(total_for(best_h), budget))
    throw BudgetInfeasible(budget_message(budget, total_for(best_h), minimum), minimum);
  MatchedBaseline out{{}, DenseNet::zeros({summary, best_h, best_h, 1})};
  for (int i = 0; i < n_actors; ++i) out.actors.push_back(DenseNet::zeros({obs_dim, best_h, best_h, a}));
  return out;
}

DenseNet build_critic_for_budget(long long budget, int obs_dim) {
  if (obs_dim < 1) throw DimensionError("critic input must be positive");
  const int summary = 2 * obs_dim;
  auto count = [&](int h) { return DenseNet::count_for(one_hidden(summary, h, 1)); };
  int best = 0;
  for (int h = 1; count(h) <= 2 * std::max(budget, 1LL); ++h)
    if (std::llabs(count(h) - budget) < std::llabs(count(best) - budget)) best = h;
  return DenseNet::zeros(one_hidden(summary, best, 1));
}

// ------------------------------------------------------------ dense parts

DenseActor::DenseActor(DenseNet net, double learning_rate)
    : net_(std::move(net)), optimizer_(pshift::OptimizerState::for_size(net_.param_count(), learning_rate)) {}

vqc::ActionDistribution DenseActor::policy(const marl::Observation& obs) const {
  return vqc::ActionDistribution(vqc::softmax(dense_forward(net_, obs)));
}

double DenseActor::update(std::span<const pshift::ActorSample> batch) {
  if (batch.empty()) throw BatchError("empty actor batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net_.param_count());
  for (const auto& s : batch) {
    if (s.action < 0 || s.action >= net_.output_size()) throw ActionError("action outside the policy support");
    if (!std::isfinite(s.advantage)) throw DataError("non-finite advantage");
    if (s.advantage == 0.0) continue;
    const Eigen::VectorXd p = vqc::softmax(dense_forward(net_, s.obs));
    loss -= scale * s.advantage * std::log(p(s.action));
    // d(-A log p_a)/d logits = -A (onehot(a) - p)
    Eigen::VectorXd g = scale * s.advantage * p;
    g(s.action) -= scale * s.advantage;
    grad += dense_backprop(net_, s.obs, g);
  }
  auto [next, state] = pshift::optimizer_step(net_.flat(), grad, std::move(optimizer_));
  net_.set_flat(next);
  optimizer_ = std::move(state);
  return loss;
}

DenseCritic::DenseCritic(DenseNet net, double learning_rate)
    : net_(std::move(net)), optimizer_(pshift::OptimizerState::for_size(net_.param_count(), learning_rate)) {
  if (net_.output_size() != 1) throw DimensionError("critic must have a single output");
}

double DenseCritic::value(const marl::Observation& summary) const { return dense_forward(net_, summary)(0); }

double DenseCritic::update(std::span<const pshift::CriticSample> batch) {
  if (batch.empty()) throw BatchError("empty critic batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net_.param_count());
  Eigen::VectorXd g(1);
  for (const auto& s : batch) {
    const double err = value(s.summary) - s.target;
    loss += scale * err * err;
    g(0) = 2.0 * scale * err;
    grad += dense_backprop(net_, s.summary, g);
  }
  auto [next, state] = pshift::optimizer_step(net_.flat(), grad, std::move(optimizer_));
  net_.set_flat(next);
  optimizer_ = std::move(state);
  return loss;
}

std::unique_ptr<marl::ActorCriticAgent> make_classical_agent(const std::string& kind, long long budget, int n_agents,
                                                             int obs_dim, std::int64_t action_dim,
                                                             double learning_rate, std::uint64_t seed) {
  auto shapes = build_matched_baseline(budget, obs_dim, action_dim, n_agents);
  std::vector<std::unique_ptr<marl::ActorModel>> actors;
  marl::ParamReport report;
  for (int i = 0; i < n_agents; ++i) {
    Rng init = make_rng(seed, Stream::ActorInit, {static_cast<std::uint64_t>(i)});
    auto& sizes = shapes.actors[static_cast<std::size_t>(i)].layer_sizes;
    auto actor = std::make_unique<DenseActor>(init_dense(sizes, init), learning_rate);
    report.networks.push_back({"actor" + std::to_string(i), actor->param_count()});
    actors.push_back(std::move(actor));
  }
  Rng init = make_rng(seed, Stream::CriticInit);
  auto critic = std::make_unique<DenseCritic>(init_dense(shapes.critic.layer_sizes, init), learning_rate);
  report.networks.push_back({"critic", critic->param_count()});
  return std::make_unique<marl::ActorCriticAgent>(kind, std::move(actors), std::move(critic), std::move(report));
}

std::unique_ptr<marl::ActorCriticAgent> make_hybrid_agent(const marl::QuantumAgentSpec& spec, int obs_dim,
                                                          long long budget, std::uint64_t seed) {
  auto [actors, report] = marl::make_quantum_actors(spec, seed);
  const long long actor_total = report.total();
  DenseNet shape = build_critic_for_budget(budget - actor_total, obs_dim);
  const long long total = actor_total + shape.param_count();
  if (!within_tolerance(total, budget)) {
    const long long minimum = actor_total + DenseNet::count_for({2 * obs_dim, 1});
    throw BudgetInfeasible(budget_message(budget, total, minimum), minimum);
  }
  Rng init = make_rng(seed, Stream::CriticInit);
  auto critic = std::make_unique<DenseCritic>(init_dense(shape.layer_sizes, init), spec.learning_rate);
  report.networks.push_back({"critic", critic->param_count()});
  return std::make_unique<marl::ActorCriticAgent>("hybrid", std::move(actors), std::move(critic), std::move(report));
}

// -------------------------------------------------------------------- IQL

Eigen::VectorXd QTable::row(std::uint64_t key) const {
  const auto it = values.find(key);
  if (it != values.end()) return it->second;
  return Eigen::VectorXd::Zero(action_dim);
}

std::uint64_t bucket(const marl::Observation& obs) {
  std::uint64_t key = 0;
  for (Eigen::Index i = 0; i < obs.size(); ++i) {
    const double x = std::clamp(obs(i), 0.0, 1.0);
    const auto level = std::min<std::uint64_t>(kBucketLevels - 1, static_cast<std::uint64_t>(x * kBucketLevels));
    key = key * kBucketLevels + level;
  }
  return key;
}

double iql_update(QTable& table, const Transition& t, double gamma) {
  if (t.action < 0 || t.action >= table.action_dim) throw ActionError("action outside the Q-table");
  const double bootstrap = t.terminal ? 0.0 : gamma * table.row(t.next_state).maxCoeff();
  auto it = table.values.try_emplace(t.state, Eigen::VectorXd::Zero(table.action_dim)).first;
  const double td = t.reward + bootstrap - it->second(t.action);
  it->second(t.action) += table.learning_rate * td;
  return td;
}

namespace {

// Greedy summary of one Q row: maximum, number of maximal entries, first argmax.
struct Greedy {
  double best;
  std::int64_t ties;
  int first;
};

Greedy greedy_of(const Eigen::VectorXd& q) {
  Greedy g{q(0), 0, 0};
  for (Eigen::Index a = 0; a < q.size(); ++a) {
    if (q(a) > g.best) g = {q(a), 0, static_cast<int>(a)};
    if (q(a) == g.best) ++g.ties;
  }
  return g;
}

}  // namespace

int iql_act(const QTable& table, std::uint64_t state, Rng& rng) {
  if (uniform01(rng) < table.epsilon) return static_cast<int>(uniform_index(rng, table.action_dim));
  const auto it = table.values.find(state);
  if (it == table.values.end()) return static_cast<int>(uniform_index(rng, table.action_dim));
  const Eigen::VectorXd& q = it->second;
  const Greedy g = greedy_of(q);
  // Uniform among maximal entries.
  auto pick = uniform_index(rng, static_cast<std::uint64_t>(g.ties));
  for (Eigen::Index a = g.first; a < q.size(); ++a)
    if (q(a) == g.best && pick-- == 0) return static_cast<int>(a);
  return g.first;
}

double iql_log_prob(const QTable& table, std::uint64_t state, int action) {
  const double explore = table.epsilon / static_cast<double>(table.action_dim);
  const auto it = table.values.find(state);
  if (it == table.values.end()) return std::log(1.0 / static_cast<double>(table.action_dim));
  const Greedy g = greedy_of(it->second);
  const double greedy = it->second(action) == g.best ? (1.0 - table.epsilon) / static_cast<double>(g.ties) : 0.0;
  return std::log(explore + greedy);
}

IqlAgent::IqlAgent(int n_agents, int obs_dim, std::int64_t action_dim, double learning_rate, double epsilon,
                   bool single_state)
    : obs_dim_(obs_dim), single_state_(single_state) {
  if (n_agents < 1 || obs_dim < 1 || action_dim < 1) throw ConfigError("IQL shapes must be positive");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("IQL epsilon must lie in [0, 1]");
  if (!(learning_rate >= 0.0 && learning_rate <= 1.0)) throw ConfigError("IQL learning rate must lie in [0, 1]");
  for (int i = 0; i < n_agents; ++i) tables_.push_back({action_dim, learning_rate, epsilon, {}});
}

marl::ParamReport IqlAgent::param_report() const {
  // Full tabular size, whether or not every bucket has been visited.
  long long states = 1;
  if (!single_state_)
    for (int i = 0; i < obs_dim_; ++i) states *= kBucketLevels;
  marl::ParamReport r;
  for (std::size_t i = 0; i < tables_.size(); ++i)
    r.networks.push_back({"qtable" + std::to_string(i), states * tables_[i].action_dim});
  return r;
}

marl::PolicySample IqlAgent::act(int agent, const marl::Observation& obs, Rng& rng) const {
  const auto& table = tables_.at(static_cast<std::size_t>(agent));
  const std::uint64_t s = key(obs);
  const int a = iql_act(table, s, rng);
  return {a, iql_log_prob(table, s, a)};
}

marl::UpdateStats IqlAgent::update(std::span<const marl::Trajectory> batch, double gamma) {
  std::vector<double> sq;
  for (const auto& traj : batch) {
    auto& table = tables_.at(static_cast<std::size_t>(traj.agent_id));
    for (const auto& r : traj.records) {
      const double td = iql_update(table, {key(r.obs), r.action, r.reward, key(r.next_obs), r.done}, gamma);
      sq.push_back(td * td);
    }
  }
  return {0.0, mean_of(sq)};
}

// ----------------------------------------------------------------- random

int random_policy(std::int64_t action_dim, Rng& rng) {
  if (action_dim < 1) throw ActionError("action_dim must be at least 1");
  return static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(action_dim)));
}

RandomAgent::RandomAgent(std::int64_t action_dim) : action_dim_(action_dim) {
  if (action_dim < 1) throw ConfigError("action_dim must be at least 1");
}

marl::PolicySample RandomAgent::act(int, const marl::Observation&, Rng& rng) const {
  return {random_policy(action_dim_, rng), -std::log(static_cast<double>(action_dim_))};
}

}  // namespace qmarl::baselines
