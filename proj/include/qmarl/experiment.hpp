#pragma once

// Experiment configuration (strict JSON) and the env/agent factory that
// turns one into a runnable training job.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "qmarl/envs.hpp"
#include "qmarl/marl.hpp"

namespace qmarl {

struct EnvSettings {
  std::string kind;  // factory | uav | bandit
  envs::FactoryConfig factory;
  envs::UavConfig uav;
  int k = 1;  // bandit bits; one of 1, 4, 16
};

struct AgentSettings {
  std::string kind = "quantum";  // quantum | hybrid | classical110 | classical40k | iql | random
  int actor_qubits = 0;
  int actor_layers = 0;
  int critic_qubits = 0;
  int critic_layers = 0;
  std::string readout;  // softmax | pvm
  double beta = 5.0;
  double v_scale = 20.0;
  double epsilon = 0.1;  // IQL exploration
  double iql_learning_rate = 0.1;
};

struct ExperimentConfig {
  EnvSettings env;
  AgentSettings agent;
  marl::TrainSettings train;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/latest";
  /// Key paths filled from defaults, in parse order.
  std::vector<std::string> defaults_applied;

  /// Every resolved field, defaults included.
  nlohmann::ordered_json to_json() const;
};

inline const std::vector<std::string> kAgentKinds = {"quantum", "hybrid", "classical110", "classical40k", "iql",
                                                     "random"};

/// Throws ConfigError whose message starts with the offending key path.
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_json(const nlohmann::json& root);

std::unique_ptr<envs::Environment> make_environment(const ExperimentConfig& cfg);

/// Fixed bandit target for a run; independent of the per-episode streams.
std::uint64_t bandit_target_seed(std::uint64_t seed);

/// Builds the configured agent. Budget infeasibility surfaces here, before
/// any training, as BudgetInfeasible.
std::unique_ptr<marl::Agent> make_agent(const ExperimentConfig& cfg, const envs::Environment& env);

}  // namespace qmarl
