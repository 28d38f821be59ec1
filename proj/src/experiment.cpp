#include "qmarl/experiment.hpp"

#include <bit>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "qmarl/baselines.hpp"
#include "qmarl/error.hpp"

namespace qmarl {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

// One JSON object with strict key accounting: every key must be read or it
// is reported as unknown by finish().
class Section {
 public:
  Section(const json& obj, std::string path, std::vector<std::string>& defaults)
      : obj_(obj), path_(std::move(path)), defaults_(defaults) {
    if (!obj_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  long long integer(const std::string& key, long long fallback, long long lo, long long hi) {
    const json* v = raw(key);
    if (!v) return defaulted(key, fallback);
    if (!v->is_number_integer()) fail(key_path(key), "expected an integer");
    const long long x = v->get<long long>();
    if (x < lo || x > hi) fail(key_path(key), "out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return x;
  }

  double real(const std::string& key, double fallback, double lo, double hi) {
    const json* v = raw(key);
    if (!v) return defaulted(key, fallback);
    if (!v->is_number()) fail(key_path(key), "expected a number");
    const double x = v->get<double>();
    if (!(x >= lo && x <= hi)) fail(key_path(key), "out of range [" + num(lo) + ", " + num(hi) + "]");
    return x;
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = raw(key);
    if (!v) return defaulted(key, fallback);
    if (!v->is_boolean()) fail(key_path(key), "expected true or false");
    return v->get<bool>();
  }

  std::string choice(const std::string& key, const std::string& fallback, const std::vector<std::string>& allowed) {
    const json* v = raw(key);
    if (!v) {
      if (fallback.empty()) fail(key_path(key), "required key missing");
      return defaulted(key, fallback);
    }
    if (!v->is_string()) fail(key_path(key), "expected a string");
    const auto s = v->get<std::string>();
    for (const auto& a : allowed)
      if (a == s) return s;
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    fail(key_path(key), "unknown value '" + s + "' (expected one of " + list + ")");
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items())
      if (!seen_.count(key)) fail(key_path(key), "unknown key");
  }

 private:
  template <typename T>
  T defaulted(const std::string& key, T value) {
    defaults_.push_back(key_path(key));
    return value;
  }

  static std::string num(double x) {
    std::ostringstream os;
    os << x;
    return os.str();
  }

  const json& obj_;
  std::string path_;
  std::vector<std::string>& defaults_;
  std::set<std::string> seen_;
};

constexpr long long kIntMax = std::numeric_limits<int>::max();

int obs_dim_for(const EnvSettings& env) { return env.kind == "bandit" ? env.k : 4; }

std::int64_t action_dim_for(const EnvSettings& env) {
  if (env.kind == "factory") return envs::kFactoryActions;
  if (env.kind == "uav") return envs::kUavActions;
  return std::int64_t{1} << env.k;
}

void parse_env(Section& s, EnvSettings& env) {
  env.kind = s.choice("kind", "", {"factory", "uav", "bandit"});
  if (env.kind == "factory") {
    auto& f = env.factory;
    f.amr_capacity = static_cast<int>(s.integer("amr_capacity", f.amr_capacity, 1, 10000));
    f.warehouse_capacity = static_cast<int>(s.integer("warehouse_capacity", f.warehouse_capacity, 1, 1000000));
    f.source_capacity = static_cast<int>(s.integer("source_capacity", f.source_capacity, 1, 1000000));
    f.arrivals_per_step = static_cast<int>(s.integer("arrivals_per_step", f.arrivals_per_step, 0, 10000));
    f.ship_capacity = static_cast<int>(s.integer("ship_capacity", f.ship_capacity, 1, 10000));
    f.good_probability = s.real("good_probability", f.good_probability, 0.0, 1.0);
    f.overflow_penalty = s.real("overflow_penalty", f.overflow_penalty, 0.0, 1e6);
    f.horizon = static_cast<int>(s.integer("horizon", f.horizon, 1, 100000));
    f.n_agents = static_cast<int>(s.integer("n_agents", f.n_agents, 1, 64));
  } else if (env.kind == "uav") {
    auto& u = env.uav;
    u.grid = static_cast<int>(s.integer("grid", u.grid, 2, 10000));
    u.users = static_cast<int>(s.integer("users", u.users, 1, 100000));
    u.coverage_radius = static_cast<int>(s.integer("coverage_radius", u.coverage_radius, 0, 10000));
    u.initial_energy = s.real("initial_energy", u.initial_energy, 1e-9, 1e9);
    u.move_cost = s.real("move_cost", u.move_cost, 0.0, 1e9);
    u.hover_cost = s.real("hover_cost", u.hover_cost, 0.0, 1e9);
    u.position_noise = s.real("position_noise", u.position_noise, 0.0, 10.0);
    u.wind_probability = s.real("wind_probability", u.wind_probability, 0.0, 1.0);
    u.horizon = static_cast<int>(s.integer("horizon", u.horizon, 1, 100000));
    u.n_agents = static_cast<int>(s.integer("n_agents", u.n_agents, 1, 64));
  } else {
    const long long k = s.integer("k", 1, 1, 16);
    if (k != 1 && k != 4 && k != 16) fail(s.key_path("k"), "must be one of 1, 4, 16");
    env.k = static_cast<int>(k);
  }
  s.finish();
}

void parse_agent(Section& s, const EnvSettings& env, AgentSettings& a) {
  a.kind = s.choice("kind", "quantum", kAgentKinds);
  const bool bandit = env.kind == "bandit";
  const int obs = obs_dim_for(env);
  const auto actions = action_dim_for(env);
  const int default_actor_qubits = bandit ? env.k : std::max<int>(obs, static_cast<int>(actions));
  const int default_layers = bandit ? 1 : 3;

  a.actor_qubits = static_cast<int>(s.integer("actor_qubits", default_actor_qubits, 1, 16));
  a.actor_layers = static_cast<int>(s.integer("actor_layers", default_layers, 1, 64));
  a.critic_qubits = static_cast<int>(s.integer("critic_qubits", obs, 1, 16));
  a.critic_layers = static_cast<int>(s.integer("critic_layers", default_layers, 1, 64));
  a.readout = s.choice("readout", bandit ? "pvm" : "softmax", {"softmax", "pvm"});
  a.beta = s.real("beta", a.beta, 1e-6, 1e6);
  a.v_scale = s.real("v_scale", a.v_scale, 1e-6, 1e9);
  a.epsilon = s.real("epsilon", a.epsilon, 0.0, 1.0);
  a.iql_learning_rate = s.real("iql_learning_rate", a.iql_learning_rate, 0.0, 1.0);
  s.finish();

  if (a.kind != "quantum" && a.kind != "hybrid") return;
  if (a.actor_qubits < obs) fail(s.key_path("actor_qubits"), "fewer qubits than observation components");
  if (a.kind == "quantum" && 2 * a.critic_qubits < 2 * obs)
    fail(s.key_path("critic_qubits"), "the joint summary needs at least " + std::to_string(obs) + " qubits");
  if (a.readout == "softmax" && actions > a.actor_qubits)
    fail(s.key_path("readout"), "softmax readout needs at least one qubit per action");
  if (a.readout == "pvm") {
    if (!std::has_single_bit(static_cast<std::uint64_t>(actions)))
      fail(s.key_path("readout"), "pvm readout needs a power-of-two action count");
    if (std::countr_zero(static_cast<std::uint64_t>(actions)) > a.actor_qubits)
      fail(s.key_path("readout"), "pvm readout needs log2(actions) qubits");
  }
}

void parse_train(Section& s, const EnvSettings& env, ExperimentConfig& cfg) {
  auto& t = cfg.train;
  t.epochs = static_cast<int>(s.integer("epochs", t.epochs, 1, 10000000));
  t.episodes_per_epoch = static_cast<int>(s.integer("episodes_per_epoch", t.episodes_per_epoch, 1, 100000));
  t.gamma = s.real("gamma", t.gamma, 0.0, 1.0);
  cfg.learning_rate = s.real("learning_rate", cfg.learning_rate, 1e-12, 10.0);
  t.batch_episodes = static_cast<int>(s.integer("batch_episodes", t.episodes_per_epoch, 1, 100000));
  const int n_agents = env.kind == "factory" ? env.factory.n_agents : env.kind == "uav" ? env.uav.n_agents : 1;
  const long long min_capacity = static_cast<long long>(t.batch_episodes) * n_agents;
  t.buffer_capacity = static_cast<std::size_t>(
      s.integer("buffer_capacity", std::max<long long>(64, min_capacity), 1, 100000000));
  if (static_cast<long long>(t.buffer_capacity) < min_capacity)
    fail(s.key_path("buffer_capacity"), "must hold at least batch_episodes * n_agents trajectories (" +
                                            std::to_string(min_capacity) + ")");
  t.record_wallclock = s.boolean("record_wallclock", t.record_wallclock);
  s.finish();
}

}  // namespace

nlohmann::ordered_json ExperimentConfig::to_json() const {
  nlohmann::ordered_json e;
  e["kind"] = env.kind;
  if (env.kind == "factory") {
    const auto& f = env.factory;
    e["amr_capacity"] = f.amr_capacity;
    e["warehouse_capacity"] = f.warehouse_capacity;
    e["source_capacity"] = f.source_capacity;
    e["arrivals_per_step"] = f.arrivals_per_step;
    e["ship_capacity"] = f.ship_capacity;
    e["good_probability"] = f.good_probability;
    e["overflow_penalty"] = f.overflow_penalty;
    e["horizon"] = f.horizon;
    e["n_agents"] = f.n_agents;
  } else if (env.kind == "uav") {
    const auto& u = env.uav;
    e["grid"] = u.grid;
    e["users"] = u.users;
    e["coverage_radius"] = u.coverage_radius;
    e["initial_energy"] = u.initial_energy;
    e["move_cost"] = u.move_cost;
    e["hover_cost"] = u.hover_cost;
    e["position_noise"] = u.position_noise;
    e["wind_probability"] = u.wind_probability;
    e["horizon"] = u.horizon;
    e["n_agents"] = u.n_agents;
  } else {
    e["k"] = env.k;
  }
  nlohmann::ordered_json a;
  a["kind"] = agent.kind;
  a["actor_qubits"] = agent.actor_qubits;
  a["actor_layers"] = agent.actor_layers;
  a["critic_qubits"] = agent.critic_qubits;
  a["critic_layers"] = agent.critic_layers;
  a["readout"] = agent.readout;
  a["beta"] = agent.beta;
  a["v_scale"] = agent.v_scale;
  a["epsilon"] = agent.epsilon;
  a["iql_learning_rate"] = agent.iql_learning_rate;
  nlohmann::ordered_json t;
  t["epochs"] = train.epochs;
  t["episodes_per_epoch"] = train.episodes_per_epoch;
  t["gamma"] = train.gamma;
  t["learning_rate"] = learning_rate;
  t["batch_episodes"] = train.batch_episodes;
  t["buffer_capacity"] = train.buffer_capacity;
  t["record_wallclock"] = train.record_wallclock;
  nlohmann::ordered_json out;
  out["env"] = e;
  out["agent"] = a;
  out["train"] = t;
  out["seed"] = seed;
  out["output_dir"] = output_dir;
  return out;
}

ExperimentConfig parse_config_json(const json& root) {
  ExperimentConfig cfg;
  Section top(root, "", cfg.defaults_applied);

  const json* env = top.raw("env");
  if (!env) fail("env", "required key missing");
  Section env_section(*env, "env", cfg.defaults_applied);
  parse_env(env_section, cfg.env);

  const json empty = json::object();
  const json* agent = top.raw("agent");
  if (!agent) cfg.defaults_applied.push_back("agent");
  Section agent_section(agent ? *agent : empty, "agent", cfg.defaults_applied);
  parse_agent(agent_section, cfg.env, cfg.agent);

  const json* train = top.raw("train");
  if (!train) cfg.defaults_applied.push_back("train");
  Section train_section(train ? *train : empty, "train", cfg.defaults_applied);
  parse_train(train_section, cfg.env, cfg);

  if (const json* seed = top.raw("seed")) {
    if (!seed->is_number_unsigned()) fail("seed", "expected a non-negative 64-bit integer");
    cfg.seed = seed->get<std::uint64_t>();
  } else {
    cfg.defaults_applied.push_back("seed");
  }
  if (const json* dir = top.raw("output_dir")) {
    if (!dir->is_string() || dir->get<std::string>().empty()) fail("output_dir", "expected a non-empty path");
    cfg.output_dir = dir->get<std::string>();
  } else {
    cfg.defaults_applied.push_back("output_dir");
  }
  top.finish();
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("<root>: syntax error: ") + e.what());
  }
  return parse_config_json(root);
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config_text(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::uint64_t bandit_target_seed(std::uint64_t seed) { return derive_seed(seed, Stream::EnvReset, {0xBA}); }

std::unique_ptr<envs::Environment> make_environment(const ExperimentConfig& cfg) {
  if (cfg.env.kind == "factory") return envs::make_factory(cfg.env.factory);
  if (cfg.env.kind == "uav") return envs::make_uav(cfg.env.uav);
  if (cfg.env.kind == "bandit") return envs::make_bandit(cfg.env.k, bandit_target_seed(cfg.seed));
  throw ConfigError("env.kind: unknown environment '" + cfg.env.kind + "'");
}

std::unique_ptr<marl::Agent> make_agent(const ExperimentConfig& cfg, const envs::Environment& env) {
  const auto& a = cfg.agent;
  const int n = env.n_agents();
  const auto actions = env.action_dim();
  if (actions > kIntMax) throw ConfigError("env: action space too large");

  marl::QuantumAgentSpec spec;
  spec.n_agents = n;
  spec.action_dim = static_cast<int>(actions);
  spec.actor_qubits = a.actor_qubits;
  spec.actor_layers = a.actor_layers;
  spec.critic_qubits = a.critic_qubits;
  spec.critic_layers = a.critic_layers;
  spec.pvm = a.readout == "pvm";
  spec.beta = a.beta;
  spec.v_scale = a.v_scale;
  spec.learning_rate = cfg.learning_rate;

  if (a.kind == "quantum") return marl::make_quantum_agent(spec, cfg.seed);
  if (a.kind == "hybrid") return baselines::make_hybrid_agent(spec, env.obs_dim(), 110, cfg.seed);
  if (a.kind == "classical110")
    return baselines::make_classical_agent(a.kind, 110, n, env.obs_dim(), actions, cfg.learning_rate, cfg.seed);
  if (a.kind == "classical40k")
    return baselines::make_classical_agent(a.kind, 40000, n, env.obs_dim(), actions, cfg.learning_rate, cfg.seed);
  if (a.kind == "iql")
    return std::make_unique<baselines::IqlAgent>(n, env.obs_dim(), actions, a.iql_learning_rate, a.epsilon,
                                                 cfg.env.kind == "bandit");
  if (a.kind == "random") return std::make_unique<baselines::RandomAgent>(actions);
  throw ConfigError("agent.kind: unknown agent '" + a.kind + "'");
}

}  // namespace qmarl
