#pragma once

// Command implementations behind the qmarl executable. Each returns the
// process exit code and writes human-readable output to the given streams.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qmarl/experiment.hpp"
#include "qmarl/marl.hpp"

namespace qmarl::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kMetricsHeader = "epoch,total_reward,actor_loss,critic_loss,wallclock_ms";
inline constexpr const char* kCompareHeader = "agent_kind,param_count,action_dim,final_mean_reward,epochs_to_90pct";

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kConfigError = 2, kRuntimeError = 3 };

/// Parses a QMARL_SEED value; nullopt for null or empty, ConfigError if malformed.
std::optional<std::uint64_t> parse_seed_override(const char* value);

std::string format_metrics_row(const marl::TrainMetrics& m);

/// Mean of the last min(100, n) rewards.
double final_mean_reward(std::span<const double> rewards);

/// First epoch whose trailing-20 mean reaches 90% of the final trailing-100
/// mean. Windows are full once 20 epochs exist; shorter runs use what is there.
std::optional<int> epochs_to_90pct(std::span<const double> rewards);

enum class RunStatus { Finished, Infeasible, ConfigFailed, RuntimeFailed };

struct RunOutcome {
  RunStatus status = RunStatus::Finished;
  std::string agent_kind;
  std::int64_t action_dim = 0;
  long long param_count = 0;
  std::vector<marl::TrainMetrics> metrics;
  std::string error;

  int exit_code() const;
};

/// Builds env and agent, then trains writing `metrics.csv` and `manifest.json`
/// into `cfg.output_dir`. Never throws for config or training failures.
RunOutcome run_experiment(const ExperimentConfig& cfg, std::ostream& log);

int cmd_train(const std::filesystem::path& config, std::optional<std::uint64_t> seed_override, std::ostream& out,
              std::ostream& err);

struct GradcheckOptions {
  int trials = 100;
  std::uint64_t seed = 0;
  double tolerance = 1e-5;
  double fd_step = 1e-4;
  /// Test hook: replaces the shift angle to force a breach.
  std::optional<double> shift_override;
};

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err);

int cmd_compare(const std::vector<std::filesystem::path>& configs, const std::filesystem::path& out_dir,
                std::optional<std::uint64_t> seed_override, std::ostream& out, std::ostream& err);

}  // namespace qmarl::cli
