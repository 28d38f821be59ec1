#include "qmarl/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

#include "qmarl/baselines.hpp"
#include "qmarl/error.hpp"
#include "qmarl/pshift.hpp"

namespace qmarl::cli {
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

// Writes via a temporary file so a crash never leaves a truncated manifest.
void write_json(const fs::path& path, const ordered_json& j) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

ordered_json param_json(const marl::ParamReport& report) {
  ordered_json nets = ordered_json::object();
  for (const auto& n : report.networks) nets[n.name] = n.params;
  ordered_json j;
  j["networks"] = nets;
  j["total"] = report.total();
  return j;
}

std::string status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Finished:
      return "finished";
    case RunStatus::Infeasible:
      return "infeasible";
    case RunStatus::ConfigFailed:
      return "config_error";
    case RunStatus::RuntimeFailed:
      return "failed";
  }
  return "unknown";
}

}  // namespace

std::optional<std::uint64_t> parse_seed_override(const char* value) {
  if (!value || !*value) return std::nullopt;
  const std::string s(value);
  std::uint64_t seed = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw ConfigError("QMARL_SEED: expected a non-negative 64-bit integer, got '" + s + "'");
  return seed;
}

std::string format_metrics_row(const marl::TrainMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%lld", m.epoch, m.total_reward, m.actor_loss, m.critic_loss,
                static_cast<long long>(m.wallclock_ms));
  return buf;
}

double final_mean_reward(std::span<const double> rewards) {
  if (rewards.empty()) return 0.0;
  const std::size_t n = std::min<std::size_t>(100, rewards.size());
  double s = 0.0;
  for (std::size_t i = rewards.size() - n; i < rewards.size(); ++i) s += rewards[i];
  return s / static_cast<double>(n);
}

std::optional<int> epochs_to_90pct(std::span<const double> rewards) {
  if (rewards.empty()) return std::nullopt;
  const double target = 0.9 * final_mean_reward(rewards);
  constexpr std::size_t kWindow = 20;
  const std::size_t first = rewards.size() >= kWindow ? kWindow - 1 : 0;
  for (std::size_t e = first; e < rewards.size(); ++e) {
    const std::size_t lo = e + 1 >= kWindow ? e + 1 - kWindow : 0;
    double s = 0.0;
    for (std::size_t i = lo; i <= e; ++i) s += rewards[i];
    if (s / static_cast<double>(e + 1 - lo) >= target) return static_cast<int>(e);
  }
  return std::nullopt;
}

int RunOutcome::exit_code() const {
  switch (status) {
    case RunStatus::Finished:
      return kOk;
    case RunStatus::Infeasible:
    case RunStatus::ConfigFailed:
      return kConfigError;
    case RunStatus::RuntimeFailed:
      return kRuntimeError;
  }
  return kRuntimeError;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  RunOutcome outcome;
  outcome.agent_kind = cfg.agent.kind;

  std::unique_ptr<envs::Environment> env;
  std::unique_ptr<marl::Agent> agent;
  try {
    env = make_environment(cfg);
    outcome.action_dim = env->action_dim();
    agent = make_agent(cfg, *env);
    outcome.param_count = agent->param_report().total();
  } catch (const BudgetInfeasible& e) {
    outcome.status = RunStatus::Infeasible;
    outcome.error = e.what();
    log << "agent " << cfg.agent.kind << ": " << e.what() << '\n';
    return outcome;
  } catch (const Error& e) {
    outcome.status = RunStatus::ConfigFailed;
    outcome.error = e.what();
    log << "configuration error: " << e.what() << '\n';
    return outcome;
  }

  const fs::path dir = cfg.output_dir;
  const fs::path manifest_path = dir / "manifest.json";
  ordered_json manifest;
  manifest["tool"] = "qmarl";
  manifest["version"] = kToolVersion;
  manifest["status"] = "running";
  manifest["finished"] = false;
  manifest["started_at"] = utc_now();
  manifest["config"] = cfg.to_json();
  manifest["defaults_applied"] = cfg.defaults_applied;
  manifest["parameters"] = param_json(agent->param_report());
  manifest["action_dim"] = outcome.action_dim;

  const auto start = std::chrono::steady_clock::now();
  try {
    fs::create_directories(dir);
    write_json(manifest_path, manifest);
    std::ofstream csv(dir / "metrics.csv", std::ios::trunc);
    if (!csv) throw Error("cannot write " + (dir / "metrics.csv").string());
    csv << kMetricsHeader << '\n' << std::flush;

    const int report_every = std::max(1, cfg.train.epochs / 10);
    auto sink = [&](const marl::TrainMetrics& m) {
      csv << format_metrics_row(m) << '\n' << std::flush;
      if (!csv) throw Error("metrics.csv write failed");
      if ((m.epoch + 1) % report_every == 0 || m.epoch + 1 == cfg.train.epochs)
        log << "epoch " << m.epoch + 1 << "/" << cfg.train.epochs << "  reward " << fixed(m.total_reward, 4)
            << "  actor_loss " << fixed(m.actor_loss, 4) << "  critic_loss " << fixed(m.critic_loss, 4) << '\n';
    };
    outcome.metrics = marl::train(*env, *agent, cfg.train, cfg.seed, sink);
  } catch (const std::exception& e) {
    outcome.status = RunStatus::RuntimeFailed;
    outcome.error = e.what();
    log << "run failed: " << e.what() << '\n';
  }

  const auto elapsed =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  manifest["status"] = status_name(outcome.status);
  manifest["finished"] = outcome.status == RunStatus::Finished;
  manifest["finished_at"] = utc_now();
  manifest["elapsed_ms"] = elapsed;
  manifest["epochs_completed"] = outcome.metrics.size();
  if (!outcome.error.empty()) manifest["error"] = outcome.error;
  try {
    write_json(manifest_path, manifest);
  } catch (const std::exception& e) {
    log << "manifest not finalized: " << e.what() << '\n';
    if (outcome.status == RunStatus::Finished) {
      outcome.status = RunStatus::RuntimeFailed;
      outcome.error = e.what();
    }
  }
  return outcome;
}

int cmd_train(const fs::path& config, std::optional<std::uint64_t> seed_override, std::ostream& out,
              std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = parse_config(config);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
  if (seed_override) cfg.seed = *seed_override;
  out << "train " << cfg.env.kind << "/" << cfg.agent.kind << " seed " << cfg.seed << " -> " << cfg.output_dir
      << '\n';
  const auto outcome = run_experiment(cfg, out);
  if (outcome.status != RunStatus::Finished) {
    err << "error: " << outcome.error << '\n';
    return outcome.exit_code();
  }
  std::vector<double> rewards;
  for (const auto& m : outcome.metrics) rewards.push_back(m.total_reward);
  out << "parameters " << outcome.param_count << ", final mean reward " << fixed(final_mean_reward(rewards), 4)
      << '\n';
  return kOk;
}

// -------------------------------------------------------------- gradcheck

namespace {

struct GradcheckInstance {
  int n_qubits = 1;
  int layers = 1;
  vqc::Encoding encoding = vqc::Encoding::Angle;
  Eigen::VectorXd obs;
  Eigen::VectorXd params;
  pshift::ReadoutSelector selector;
};

GradcheckInstance random_instance(std::uint64_t seed, int trial) {
  Rng rng = make_rng(seed, Stream::Gradcheck, {static_cast<std::uint64_t>(trial)});
  GradcheckInstance g;
  g.n_qubits = 1 + static_cast<int>(uniform_index(rng, 4));
  g.layers = 1 + static_cast<int>(uniform_index(rng, 3));
  g.encoding = uniform_index(rng, 2) ? vqc::Encoding::Dense : vqc::Encoding::Angle;
  const auto tmpl = vqc::CircuitTemplate::layered(g.n_qubits, g.layers, g.encoding);
  g.obs.resize(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(tmpl.input_capacity()) + 1)));
  for (auto& x : g.obs) x = uniform(rng, -2.0, 2.0);
  g.params.resize(tmpl.param_slots());
  for (auto& x : g.params) x = uniform(rng, -std::numbers::pi, std::numbers::pi);
  if (uniform_index(rng, 2)) {
    g.selector = pshift::ZReadout{static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(g.n_qubits)))};
  } else {
    std::vector<int> wires(static_cast<std::size_t>(g.n_qubits));
    for (int w = 0; w < g.n_qubits; ++w) wires[static_cast<std::size_t>(w)] = w;
    std::shuffle(wires.begin(), wires.end(), rng);
    wires.resize(1 + uniform_index(rng, wires.size()));
    const auto pattern = uniform_index(rng, std::uint64_t{1} << wires.size());
    g.selector = pshift::ProbabilityReadout{wires, pattern};
  }
  return g;
}

ordered_json serialize_instance(const GradcheckInstance& g, int trial, std::uint64_t seed, double deviation) {
  ordered_json j;
  j["seed"] = seed;
  j["trial"] = trial;
  j["n_qubits"] = g.n_qubits;
  j["layers"] = g.layers;
  j["encoding"] = g.encoding == vqc::Encoding::Dense ? "dense" : "angle";
  j["obs"] = std::vector<double>(g.obs.begin(), g.obs.end());
  j["params"] = std::vector<double>(g.params.begin(), g.params.end());
  if (const auto* z = std::get_if<pshift::ZReadout>(&g.selector)) {
    j["readout"] = {{"z_wire", z->wire}};
  } else {
    const auto& p = std::get<pshift::ProbabilityReadout>(g.selector);
    j["readout"] = {{"wires", p.wires}, {"pattern", p.pattern}};
  }
  j["max_deviation"] = deviation;
  return j;
}

std::string describe(const pshift::ReadoutSelector& s) {
  if (const auto* z = std::get_if<pshift::ZReadout>(&s)) return "Z" + std::to_string(z->wire);
  const auto& p = std::get<pshift::ProbabilityReadout>(s);
  std::string out = "P[";
  for (std::size_t i = 0; i < p.wires.size(); ++i) out += (i ? "," : "") + std::to_string(p.wires[i]);
  out += "]=";
  for (std::size_t i = p.wires.size(); i-- > 0;) out += ((p.pattern >> i) & 1u) ? '1' : '0';
  return out;
}

}  // namespace

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err) {
  if (options.trials < 1) {
    err << "error: --trials must be at least 1\n";
    return kConfigError;
  }
  pshift::ShiftOptions shift;
  if (options.shift_override) shift.rule.shift = *options.shift_override;

  double worst = 0.0;
  int worst_trial = -1;
  std::optional<ordered_json> breach;
  for (int t = 0; t < options.trials; ++t) {
    const auto g = random_instance(options.seed, t);
    const auto tmpl = vqc::CircuitTemplate::layered(g.n_qubits, g.layers, g.encoding);
    const auto exact = pshift::shift_gradient(tmpl, g.params, g.obs, g.selector, shift);
    const auto fd = pshift::finite_difference_oracle(tmpl, g.params, g.obs, g.selector, options.fd_step);
    const double dev = (exact - fd).cwiseAbs().maxCoeff();
    char line[160];
    std::snprintf(line, sizeof line, "trial %3d  n=%d L=%d %-5s %-12s params=%-3lld max_dev=%.3e", t, g.n_qubits,
                  g.layers, g.encoding == vqc::Encoding::Dense ? "dense" : "angle", describe(g.selector).c_str(),
                  static_cast<long long>(g.params.size()), dev);
    out << line << (dev > options.tolerance ? "  BREACH" : "") << '\n';
    if (!(dev <= worst)) {
      worst = dev;
      worst_trial = t;
    }
    if (!(dev <= options.tolerance) && !breach) breach = serialize_instance(g, t, options.seed, dev);
  }
  char summary[128];
  std::snprintf(summary, sizeof summary, "max deviation %.3e over %d trials (trial %d), tolerance %.1e", worst,
                options.trials, worst_trial, options.tolerance);
  out << summary << '\n';
  if (breach) {
    err << "gradcheck failed; first offending instance:\n" << breach->dump() << '\n';
    return kCheckFailed;
  }
  return kOk;
}

// ---------------------------------------------------------------- compare

int cmd_compare(const std::vector<fs::path>& configs, const fs::path& out_dir,
                std::optional<std::uint64_t> seed_override, std::ostream& out, std::ostream& err) {
  if (configs.size() < 2) {
    err << "error: compare needs at least two configs\n";
    return kConfigError;
  }
  std::vector<ExperimentConfig> parsed;
  for (const auto& path : configs) {
    try {
      parsed.push_back(parse_config(path));
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      return kConfigError;
    }
    if (seed_override) parsed.back().seed = *seed_override;
  }
  const auto env0 = parsed.front().to_json()["env"];
  for (std::size_t i = 1; i < parsed.size(); ++i)
    if (parsed[i].to_json()["env"] != env0) {
      err << "error: " << configs[i].string() << ": env differs from " << configs[0].string() << '\n';
      return kConfigError;
    }

  std::vector<std::vector<std::string>> rows;
  bool any_failed = false;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    auto& cfg = parsed[i];
    cfg.output_dir = (out_dir / (std::to_string(i) + "-" + cfg.agent.kind)).string();
    out << "[" << i + 1 << "/" << parsed.size() << "] " << cfg.agent.kind << " (" << configs[i].string() << ")\n";
    const auto r = run_experiment(cfg, out);
    std::vector<std::string> row{cfg.agent.kind, std::to_string(r.param_count), std::to_string(r.action_dim)};
    if (r.status == RunStatus::Finished) {
      std::vector<double> rewards;
      for (const auto& m : r.metrics) rewards.push_back(m.total_reward);
      const auto e90 = epochs_to_90pct(rewards);
      row.push_back(fixed(final_mean_reward(rewards), 6));
      row.push_back(e90 ? std::to_string(*e90) : "never");
    } else {
      any_failed = any_failed || r.status != RunStatus::Infeasible;
      const std::string mark = r.status == RunStatus::Infeasible ? "infeasible" : "failed";
      if (r.status == RunStatus::Infeasible) row[1] = mark;
      row.push_back(mark);
      row.push_back(mark);
    }
    rows.push_back(std::move(row));
  }

  try {
    fs::create_directories(out_dir);
    std::ofstream csv(out_dir / "compare.csv", std::ios::trunc);
    csv << kCompareHeader << '\n';
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) csv << (c ? "," : "") << row[c];
      csv << '\n';
    }
    if (!csv) throw Error("cannot write compare.csv");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }

  const std::vector<std::string> header{"agent_kind", "param_count", "action_dim", "final_mean_reward",
                                        "epochs_to_90pct"};
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  auto print = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c)
      out << (c ? "  " : "") << (c ? std::right : std::left) << std::setw(static_cast<int>(width[c])) << row[c];
    out << std::left << '\n';
  };
  print(header);
  for (const auto& row : rows) print(row);
  // Infeasible budgets are a result, not a failure.
  return any_failed ? kRuntimeError : kOk;
}

}  // namespace qmarl::cli
