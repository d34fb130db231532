// Command-line entry point: `run` trains a tournament from a config file,
// `backtest` replays a checkpoint (or a directory of snapshots) on the
// held-out window, `eval` scores a checkpoint with the evaluation protocol.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "podracer/config.hpp"
#include "podracer/runner.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

void handle_signal(int) { g_interrupted.store(true); }

std::string resolve_output_dir(const std::string& flag_value, const std::string& config_value) {
  if (!flag_value.empty()) return flag_value;
  if (!config_value.empty()) return config_value;
  if (const char* env = std::getenv("PODRACER_OUTPUT")) {
    if (*env) return env;
  }
  return "podracer_out";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"podracer: tournament-based ensemble DRL training"};
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint_path;
  std::string output_dir;
  std::string replay_slots;
  std::optional<std::uint64_t> seed_override;
  bool serial = false;

  CLI::App* run_cmd = app.add_subcommand("run", "train a pool of pods from a config file");
  run_cmd->add_option("config", config_path, "config file")->required();
  run_cmd->add_option("--seed", seed_override, "override the config seed");
  run_cmd->add_option("--output", output_dir, "output directory");
  run_cmd->add_option("--replay-slots", replay_slots, "scripted slot schedule file");
  run_cmd->add_flag("--serial", serial, "deterministic serial mode (1 pod, 1 worker, 1 learner)");

  CLI::App* backtest_cmd = app.add_subcommand("backtest", "backtest a checkpoint or snapshot dir");
  backtest_cmd->add_option("checkpoint", checkpoint_path, "checkpoint file or directory")->required();
  backtest_cmd->add_option("config", config_path, "config file")->required();
  backtest_cmd->add_option("--output", output_dir, "output directory for curve/trade CSVs");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
  eval_cmd->add_option("config", config_path, "config file")->required();
  eval_cmd->add_option("--seed", seed_override, "override the evaluation seed");

  CLI11_PARSE(app, argc, argv);

  try {
    podracer::ExperimentConfig cfg = podracer::parse_config(config_path);
    if (seed_override) cfg.seed = *seed_override;

    if (run_cmd->parsed()) {
      cfg.output_dir = resolve_output_dir(output_dir, cfg.output_dir);
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      podracer::RunOptions opts;
      opts.serial = serial;
      opts.replay_slots_path = replay_slots;
      const int rc = podracer::run_experiment(cfg, opts, &g_interrupted);
      std::cout << "run complete; outputs in " << cfg.output_dir << "\n";
      return rc;
    }
    if (backtest_cmd->parsed()) {
      if (!output_dir.empty()) cfg.output_dir = output_dir;
      else cfg.output_dir.clear();  // stdout only unless asked
      return podracer::run_backtest_command(checkpoint_path, cfg, std::cout);
    }
    if (eval_cmd->parsed()) {
      if (seed_override) cfg.pod.eval_seed = *seed_override;
      return podracer::run_eval_command(checkpoint_path, cfg, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
