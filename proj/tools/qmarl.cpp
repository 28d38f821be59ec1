#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "qmarl/cli.hpp"
#include "qmarl/error.hpp"

int main(int argc, char** argv) {
  using namespace qmarl::cli;

  CLI::App app{"Quantum multi-agent reinforcement learning lab"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  std::string config;
  auto* train = app.add_subcommand("train", "Train one configuration, writing metrics.csv and manifest.json");
  train->add_option("--config", config, "Experiment config (JSON)")->required();

  GradcheckOptions grad;
  auto* gradcheck = app.add_subcommand("gradcheck", "Parameter-shift gradients vs central finite differences");
  gradcheck->add_option("--trials", grad.trials, "Number of random circuits")->default_val(100);
  gradcheck->add_option("--seed", grad.seed, "Seed for the random circuits")->default_val(0);
  gradcheck->add_option("--tolerance", grad.tolerance, "Largest accepted deviation")->default_val(1e-5);
  // Test hook for the negative control; hidden from --help.
  gradcheck->add_option("--shift-override", grad.shift_override)->group("");

  std::vector<std::string> configs;
  std::string out_dir;
  auto* compare = app.add_subcommand("compare", "Train several agents on one environment and tabulate results");
  compare->add_option("--configs", configs, "Configs sharing one env")->required()->expected(1, -1);
  compare->add_option("--out", out_dir, "Output directory for compare.csv and per-run outputs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  std::optional<std::uint64_t> seed_override;
  try {
    seed_override = parse_seed_override(std::getenv("QMARL_SEED"));
  } catch (const qmarl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (*train) return cmd_train(config, seed_override, std::cout, std::cerr);
    if (*gradcheck) return cmd_gradcheck(grad, std::cout, std::cerr);
    std::vector<std::filesystem::path> paths(configs.begin(), configs.end());
    return cmd_compare(paths, out_dir, seed_override, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}
