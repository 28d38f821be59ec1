#pragma once

// Seeded environments: smart-factory queue management, UAV mobile access
// with state/action noise, and a Hamming-shaped combinatorial bandit.
//
// Every environment is deterministic given its seed. Randomness is split
// into independent streams (placement, dynamics, observation noise) with
// derive_seed so the streams never interleave.

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qmarl/rng.hpp"

namespace qmarl::envs {

using Observation = Eigen::VectorXd;

struct EventCounters {
  int overflow_events = 0;
  int wind_events = 0;
  int noisy_observations = 0;
};

struct StepResult {
  std::vector<Observation> observations;
  std::vector<double> rewards;
  bool done = false;
  EventCounters info;
};

/// Exact textual form (hex floats) used for byte-level determinism checks.
std::string serialize(const StepResult& r);

// ---------------------------------------------------------------- factory

struct FactoryConfig {
  int amr_capacity = 10;
  int warehouse_capacity = 100;
  int source_capacity = 20;
  int arrivals_per_step = 2;
  int ship_capacity = 3;
  double good_probability = 0.9;
  double overflow_penalty = 0.5;
  int horizon = 50;
  int n_agents = 2;

  void validate() const;
};

enum class FactoryAction : int { Idle = 0, Load1 = 1, Load2 = 2, Unload = 3 };
inline constexpr int kFactoryActions = 4;

struct FactoryState {
  FactoryConfig config;
  int source_buffer = 0;
  std::vector<int> amr_queues;
  int warehouse = 0;
  int step = 0;
  // Conservation bookkeeping.
  long long items_created = 0;
  long long items_shipped = 0;
  Rng shipping_rng;
};

std::vector<Observation> factory_observations(const FactoryState& s);
std::pair<FactoryState, std::vector<Observation>> factory_reset(const FactoryConfig& config, std::uint64_t seed);

/// Arrivals, loads in agent-index order, unloads, shipping, then rewards.
StepResult factory_step(FactoryState& s, std::span<const int> joint_action);

// -------------------------------------------------------------------- uav

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

struct UavConfig {
  int grid = 10;
  int users = 6;
  int coverage_radius = 2;
  double initial_energy = 30.0;
  double move_cost = 1.0;
  double hover_cost = 0.5;
  double position_noise = 0.02;
  double wind_probability = 0.1;
  int horizon = 40;
  int n_agents = 2;

  void validate() const;
};

enum class UavAction : int { North = 0, South = 1, East = 2, West = 3, Hover = 4 };
inline constexpr int kUavActions = 5;

struct UavState {
  UavConfig config;
  std::vector<Cell> positions;
  std::vector<double> energies;
  std::vector<Cell> users;
  int step = 0;
  bool done = false;
  Rng wind_rng;
  Rng noise_rng;
};

/// Users within Chebyshev distance `coverage_radius` of `agent`.
int users_covered(const UavState& s, int agent);
std::vector<Observation> uav_observations(UavState& s);
std::pair<UavState, std::vector<Observation>> uav_reset(const UavConfig& config, std::uint64_t seed);
StepResult uav_step(UavState& s, std::span<const int> joint_action);

// ----------------------------------------------------------------- bandit

struct BanditState {
  int k = 1;
  std::uint64_t target_bits = 0;
  std::uint64_t action_dim() const { return std::uint64_t{1} << k; }
};

BanditState bandit_reset(int k, std::uint64_t seed);
/// The bandit's single state, k ones.
Observation bandit_observation(const BanditState& s);
StepResult bandit_step(const BanditState& s, std::uint64_t action);

// ------------------------------------------------------- common interface

class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::string name() const = 0;
  virtual int n_agents() const = 0;
  virtual int obs_dim() const = 0;
  virtual std::int64_t action_dim() const = 0;
  virtual int horizon() const = 0;
  virtual std::vector<Observation> reset(std::uint64_t seed) = 0;
  virtual StepResult step(std::span<const int> joint_action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

std::unique_ptr<Environment> make_factory(const FactoryConfig& config);
std::unique_ptr<Environment> make_uav(const UavConfig& config);
/// Fixes the target on every reset from `target_seed`; the per-episode seed
/// passed to reset() is unused because the target persists for the whole run.
std::unique_ptr<Environment> make_bandit(int k, std::uint64_t target_seed);

}  // namespace qmarl::envs
