#include "qmarl/envs.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "qmarl/error.hpp"

namespace qmarl::envs {
namespace {

void append_hex(std::string& out, double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", x);
  out += buf;
}

void check_joint_action(std::span<const int> joint_action, int n_agents, int n_actions) {
  if (static_cast<int>(joint_action.size()) != n_agents)
    throw ActionError("joint action has " + std::to_string(joint_action.size()) + " entries for " +
                      std::to_string(n_agents) + " agents");
  for (int a : joint_action)
    if (a < 0 || a >= n_actions) throw ActionError("action index " + std::to_string(a) + " out of range");
}

}  // namespace

std::string serialize(const StepResult& r) {
  std::string out = "obs=";
  for (const auto& o : r.observations) {
    out += '[';
    for (Eigen::Index i = 0; i < o.size(); ++i) {
      if (i) out += ',';
      append_hex(out, o(i));
    }
    out += ']';
  }
  out += " rew=";
  for (double x : r.rewards) {
    append_hex(out, x);
    out += ',';
  }
  out += r.done ? " done" : " live";
  out += " ov=" + std::to_string(r.info.overflow_events) + " wind=" + std::to_string(r.info.wind_events) +
         " noise=" + std::to_string(r.info.noisy_observations);
  return out;
}

// ---------------------------------------------------------------- factory

void FactoryConfig::validate() const {
  if (n_agents < 1) throw ConfigError("factory needs at least one agent");
  if (amr_capacity < 1 || warehouse_capacity < 1 || source_capacity < 1 || ship_capacity < 1 || horizon < 1)
    throw ConfigError("factory capacities and horizon must be positive");
  if (arrivals_per_step < 0) throw ConfigError("factory arrivals must be non-negative");
  if (!(good_probability >= 0 && good_probability <= 1)) throw ConfigError("good_probability must lie in [0, 1]");
  if (!(overflow_penalty >= 0)) throw ConfigError("overflow_penalty must be non-negative");
}

std::vector<Observation> factory_observations(const FactoryState& s) {
  const auto& c = s.config;
  std::vector<Observation> obs;
  obs.reserve(s.amr_queues.size());
  for (int q : s.amr_queues) {
    Observation o(4);
    o << static_cast<double>(q) / c.amr_capacity, static_cast<double>(s.warehouse) / c.warehouse_capacity,
        static_cast<double>(s.source_buffer) / c.source_capacity, static_cast<double>(s.step) / c.horizon;
    obs.push_back(std::move(o));
  }
  return obs;
}

std::pair<FactoryState, std::vector<Observation>> factory_reset(const FactoryConfig& config, std::uint64_t seed) {
  config.validate();
  FactoryState s;
  s.config = config;
  s.amr_queues.assign(static_cast<std::size_t>(config.n_agents), 0);
  s.shipping_rng = make_rng(seed, Stream::EnvDynamics);
  auto obs = factory_observations(s);
  return {std::move(s), std::move(obs)};
}

StepResult factory_step(FactoryState& s, std::span<const int> joint_action) {
  const auto& c = s.config;
  if (s.step >= c.horizon) throw Error("factory episode already finished");
  check_joint_action(joint_action, c.n_agents, kFactoryActions);

  const int before = s.source_buffer;
  s.source_buffer = std::min(c.source_capacity, s.source_buffer + c.arrivals_per_step);
  s.items_created += s.source_buffer - before;

  std::vector<int> overflow(static_cast<std::size_t>(c.n_agents), 0);
  for (std::size_t i = 0; i < joint_action.size(); ++i) {
    const auto action = static_cast<FactoryAction>(joint_action[i]);
    if (action != FactoryAction::Load1 && action != FactoryAction::Load2) continue;
    const int requested = action == FactoryAction::Load1 ? 1 : 2;
    int& q = s.amr_queues[i];
    const int moved = std::min({requested, s.source_buffer, c.amr_capacity - q});
    s.source_buffer -= moved;
    q += moved;
    if (requested > moved) ++overflow[i];
  }
  for (std::size_t i = 0; i < joint_action.size(); ++i) {
    if (static_cast<FactoryAction>(joint_action[i]) != FactoryAction::Unload) continue;
    int& q = s.amr_queues[i];
    const int moved = std::min(q, c.warehouse_capacity - s.warehouse);
    if (moved < q) ++overflow[i];
    q -= moved;
    s.warehouse += moved;
  }

  const int shipped = std::min(c.ship_capacity, s.warehouse);
  s.warehouse -= shipped;
  s.items_shipped += shipped;
  int good = 0;
  for (int i = 0; i < shipped; ++i) good += uniform01(s.shipping_rng) < c.good_probability;

  ++s.step;
  StepResult r;
  const double shared = static_cast<double>(good) / c.ship_capacity;
  for (int i = 0; i < c.n_agents; ++i) {
    r.rewards.push_back(shared - c.overflow_penalty * overflow[static_cast<std::size_t>(i)]);
    r.info.overflow_events += overflow[static_cast<std::size_t>(i)];
  }
  r.observations = factory_observations(s);
  r.done = s.step >= c.horizon;
  return r;
}

// -------------------------------------------------------------------- uav

void UavConfig::validate() const {
  if (n_agents < 1) throw ConfigError("uav needs at least one agent");
  if (grid < 2) throw ConfigError("uav grid must be at least 2");
  if (users < 1) throw ConfigError("uav needs at least one user");
  if (coverage_radius < 0) throw ConfigError("coverage_radius must be non-negative");
  if (!(initial_energy > 0) || move_cost < 0 || hover_cost < 0) throw ConfigError("uav energy constants invalid");
  if (!(position_noise >= 0)) throw ConfigError("position_noise must be non-negative");
  if (!(wind_probability >= 0 && wind_probability <= 1)) throw ConfigError("wind_probability must lie in [0, 1]");
  if (horizon < 1) throw ConfigError("uav horizon must be positive");
}

int users_covered(const UavState& s, int agent) {
  const Cell p = s.positions[static_cast<std::size_t>(agent)];
  int n = 0;
  for (const Cell& u : s.users)
    n += std::max(std::abs(u.x - p.x), std::abs(u.y - p.y)) <= s.config.coverage_radius;
  return n;
}

std::vector<Observation> uav_observations(UavState& s) {
  const auto& c = s.config;
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < s.positions.size(); ++i) {
    Observation o(4);
    double nx = 0, ny = 0;
    if (c.position_noise > 0) {
      nx = c.position_noise * standard_normal(s.noise_rng);
      ny = c.position_noise * standard_normal(s.noise_rng);
    }
    o << static_cast<double>(s.positions[i].x) / c.grid + nx, static_cast<double>(s.positions[i].y) / c.grid + ny,
        s.energies[i] / c.initial_energy, static_cast<double>(users_covered(s, static_cast<int>(i))) / c.users;
    obs.push_back(std::move(o));
  }
  return obs;
}

std::pair<UavState, std::vector<Observation>> uav_reset(const UavConfig& config, std::uint64_t seed) {
  config.validate();
  UavState s;
  s.config = config;
  const int edge = config.grid - 1;
  const Cell corners[] = {{0, 0}, {edge, 0}, {0, edge}, {edge, edge}};
  for (int i = 0; i < config.n_agents; ++i) s.positions.push_back(corners[i % 4]);
  s.energies.assign(static_cast<std::size_t>(config.n_agents), config.initial_energy);
  Rng placement = make_rng(seed, Stream::EnvReset);
  for (int u = 0; u < config.users; ++u)
    s.users.push_back({static_cast<int>(uniform_index(placement, static_cast<std::uint64_t>(config.grid))),
                       static_cast<int>(uniform_index(placement, static_cast<std::uint64_t>(config.grid)))});
  s.wind_rng = make_rng(seed, Stream::EnvDynamics);
  s.noise_rng = make_rng(seed, Stream::EnvDynamics, {1});
  auto obs = uav_observations(s);
  return {std::move(s), std::move(obs)};
}

StepResult uav_step(UavState& s, std::span<const int> joint_action) {
  const auto& c = s.config;
  if (s.done) throw Error("uav episode already finished");
  check_joint_action(joint_action, c.n_agents, kUavActions);

  StepResult r;
  std::vector<bool> airborne(joint_action.size());
  for (std::size_t i = 0; i < joint_action.size(); ++i) {
    // A depleted UAV has landed: it neither moves nor serves users.
    airborne[i] = s.energies[i] > 0;
    if (!airborne[i]) continue;
    int action = joint_action[i];
    if (c.wind_probability > 0 && uniform01(s.wind_rng) < c.wind_probability) {
      const int other = static_cast<int>(uniform_index(s.wind_rng, kUavActions - 1));
      action = other >= action ? other + 1 : other;
      ++r.info.wind_events;
    }
    Cell& p = s.positions[i];
    switch (static_cast<UavAction>(action)) {
      case UavAction::North: p.y = std::min(c.grid - 1, p.y + 1); break;
      case UavAction::South: p.y = std::max(0, p.y - 1); break;
      case UavAction::East: p.x = std::min(c.grid - 1, p.x + 1); break;
      case UavAction::West: p.x = std::max(0, p.x - 1); break;
      case UavAction::Hover: break;
    }
    const double cost = action == static_cast<int>(UavAction::Hover) ? c.hover_cost : c.move_cost;
    s.energies[i] = std::max(0.0, s.energies[i] - cost);
  }
  ++s.step;
  for (int i = 0; i < c.n_agents; ++i) {
    r.rewards.push_back(airborne[static_cast<std::size_t>(i)] ? static_cast<double>(users_covered(s, i)) / c.users
                                                              : 0.0);
  }
  r.observations = uav_observations(s);
  if (c.position_noise > 0) r.info.noisy_observations = c.n_agents;
  const bool depleted = std::all_of(s.energies.begin(), s.energies.end(), [](double e) { return e <= 0; });
  s.done = s.step >= c.horizon || depleted;
  r.done = s.done;
  return r;
}

// ----------------------------------------------------------------- bandit

BanditState bandit_reset(int k, std::uint64_t seed) {
  if (k != 1 && k != 4 && k != 16) throw ConfigError("bandit k must be 1, 4 or 16, got " + std::to_string(k));
  BanditState s;
  s.k = k;
  Rng rng = make_rng(seed, Stream::EnvReset);
  s.target_bits = uniform_index(rng, s.action_dim());
  return s;
}

Observation bandit_observation(const BanditState& s) { return Observation::Ones(s.k); }

StepResult bandit_step(const BanditState& s, std::uint64_t action) {
  if (action >= s.action_dim())
    throw ActionError("bandit action " + std::to_string(action) + " outside [0, 2^" + std::to_string(s.k) + ")");
  StepResult r;
  const int distance = std::popcount(action ^ s.target_bits);
  r.rewards.push_back(1.0 - static_cast<double>(distance) / s.k);
  r.observations.push_back(bandit_observation(s));
  r.done = true;
  return r;
}

// ------------------------------------------------------- common interface

namespace {

class FactoryEnv final : public Environment {
 public:
  explicit FactoryEnv(FactoryConfig c) : config_(c) { config_.validate(); }
  std::string name() const override { return "factory"; }
  int n_agents() const override { return config_.n_agents; }
  int obs_dim() const override { return 4; }
  std::int64_t action_dim() const override { return kFactoryActions; }
  int horizon() const override { return config_.horizon; }
  std::vector<Observation> reset(std::uint64_t seed) override {
    auto [s, obs] = factory_reset(config_, seed);
    state_ = std::move(s);
    return obs;
  }
  StepResult step(std::span<const int> a) override { return factory_step(state_, a); }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<FactoryEnv>(*this); }

 private:
  FactoryConfig config_;
  FactoryState state_;
};

class UavEnv final : public Environment {
 public:
  explicit UavEnv(UavConfig c) : config_(c) { config_.validate(); }
  std::string name() const override { return "uav"; }
  int n_agents() const override { return config_.n_agents; }
  int obs_dim() const override { return 4; }
  std::int64_t action_dim() const override { return kUavActions; }
  int horizon() const override { return config_.horizon; }
  std::vector<Observation> reset(std::uint64_t seed) override {
    auto [s, obs] = uav_reset(config_, seed);
    state_ = std::move(s);
    return obs;
  }
  StepResult step(std::span<const int> a) override { return uav_step(state_, a); }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<UavEnv>(*this); }

 private:
  UavConfig config_;
  UavState state_;
};

class BanditEnv final : public Environment {
 public:
  BanditEnv(int k, std::uint64_t target_seed) : state_(bandit_reset(k, target_seed)) {}
  std::string name() const override { return "bandit"; }
  int n_agents() const override { return 1; }
  int obs_dim() const override { return state_.k; }
  std::int64_t action_dim() const override { return static_cast<std::int64_t>(state_.action_dim()); }
  int horizon() const override { return 1; }
  std::vector<Observation> reset(std::uint64_t) override { return {bandit_observation(state_)}; }
  StepResult step(std::span<const int> a) override {
    check_joint_action(a, 1, static_cast<int>(state_.action_dim()));
    return bandit_step(state_, static_cast<std::uint64_t>(a[0]));
  }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<BanditEnv>(*this); }

 private:
  BanditState state_;
};

}  // namespace

std::unique_ptr<Environment> make_factory(const FactoryConfig& config) { return std::make_unique<FactoryEnv>(config); }
std::unique_ptr<Environment> make_uav(const UavConfig& config) { return std::make_unique<UavEnv>(config); }
std::unique_ptr<Environment> make_bandit(int k, std::uint64_t target_seed) {
  return std::make_unique<BanditEnv>(k, target_seed);
}

}  // namespace qmarl::envs
