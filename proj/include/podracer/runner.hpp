#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "podracer/checkpoint.hpp"
#include "podracer/common.hpp"
#include "podracer/config.hpp"
#include "podracer/env.hpp"
#include "podracer/market.hpp"
#include "podracer/metrics.hpp"
#include "podracer/stock_env.hpp"
#include "podracer/tournament.hpp"

namespace podracer {

struct RunOptions {
  bool serial = false;                // deterministic mode: one pod, one worker,
                                      // one learner, sync eval, step clock
  std::string replay_slots_path;      // scripted slot schedule for elasticity replay
};

struct TaskBundle {
  EnvFactory train_factory;
  std::function<AgentArtifact(std::uint64_t)> fresh_init;
  std::shared_ptr<const MarketData> market;  // stock task only
  SplitWindows windows;                      // stock task only
};

/// Builds the environment factory and artifact initializer for the configured
/// task. For the stock task this loads the CSV, computes indicators and
/// resolves the train/backtest split.
inline TaskBundle build_task(const ExperimentConfig& cfg) {
  TaskBundle bundle;
  if (cfg.task == TaskKind::PointMass) {
    bundle.train_factory = [] { return std::make_unique<PointMass2D>(); };
    const std::vector<std::size_t> hidden = cfg.hidden_sizes;
    const double lr = cfg.ppo.learning_rate;
    bundle.fresh_init = [hidden, lr](std::uint64_t seed) {
      return artifact_init(kPointMassStateDim, kPointMassActionDim, seed, lr, hidden);
    };
    return bundle;
  }
  MarketData raw = load_ohlcv(cfg.data.csv_path, cfg.data.tickers);
  auto data = std::make_shared<MarketData>(compute_indicators(raw));
  bundle.market = data;
  bundle.windows = resolve_split(*data, cfg.data.split);
  const StockConfig stock = cfg.stock;
  const std::size_t begin = bundle.windows.train_begin;
  const std::size_t end = bundle.windows.train_end;
  bundle.train_factory = [data, stock, begin, end] {
    return std::make_unique<StockTradingEnv>(data, stock, begin, end);
  };
  const std::size_t state_dim = stock_observation_dim(cfg.data.tickers.size());
  const std::size_t action_dim = cfg.data.tickers.size();
  const std::vector<std::size_t> hidden = cfg.hidden_sizes;
  const double lr = cfg.ppo.learning_rate;
  bundle.fresh_init = [state_dim, action_dim, hidden, lr](std::uint64_t seed) {
    return artifact_init(state_dim, action_dim, seed, lr, hidden);
  };
  return bundle;
}

inline void write_run_summary(const RunSummary& summary, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  out << "termination_reason = " << summary.termination_reason << "\n";
  out << "pods_spawned = " << summary.pods_spawned << "\n";
  out << "total_env_steps = " << summary.total_env_steps << "\n";
  out << "\n[leaderboard]\n";
  out << "rank\tpod_id\tscore\tinserted_at\n";
  for (std::size_t i = 0; i < summary.final_leaderboard.size(); ++i) {
    const auto& e = summary.final_leaderboard[i];
    char line[128];
    std::snprintf(line, sizeof(line), "%zu\t%lld\t%.10g\t%.6f\n", i,
                  static_cast<long long>(e.pod_id), e.score, e.inserted_at);
    out << line;
  }
  out << "\n[lineage]\n";
  out << "pod_id\tparent\tmutation_seed\n";
  for (const auto& p : summary.pods) {
    out << p.pod_id << "\t" << (p.parent_pod < 0 ? std::string("fresh") : std::to_string(p.parent_pod))
        << "\t" << p.mutation_seed << "\n";
  }
  out << "\n[pods]\n";
  out << "pod_id\tstop_reason\tbest_score\tenv_steps\n";
  for (const auto& p : summary.pods) {
    char line[160];
    std::snprintf(line, sizeof(line), "%lld\t%s\t%.10g\t%lld\n", static_cast<long long>(p.pod_id),
                  p.stop_reason.c_str(), p.best_score, static_cast<long long>(p.env_steps));
    out << line;
    if (p.crashed) out << "# pod " << p.pod_id << " error: " << p.error << "\n";
  }
}

/// Executes a full experiment run: orchestrates the pool, then writes the
/// event log, per-pod curves, leaderboard checkpoints, run summary and (for
/// the stock task) backtest reports into the output directory.
/// Returns 0 when the run terminated by target or exhausted its budget.
inline int run_experiment(ExperimentConfig cfg, const RunOptions& opts,
                          std::atomic<bool>* external_cancel = nullptr) {
  if (opts.serial) {
    cfg.pool.max_pods = 1;
    cfg.pool.total_slots = std::max<std::size_t>(cfg.pool.total_slots, 1);
    cfg.pod.envs_per_worker = cfg.pod.envs_per_worker * cfg.pod.num_workers;
    cfg.pod.num_workers = 1;
    cfg.pod.num_learners = 1;
    cfg.pod.async_eval = false;
  }
  cfg.validate();
  if (cfg.output_dir.empty()) throw ConfigError("output_dir is not set");
  std::filesystem::create_directories(cfg.output_dir);

  {
    std::ofstream echo(cfg.output_dir + "/effective_config.txt", std::ios::trunc);
    echo << echo_config(cfg);
  }

  TaskBundle task = build_task(cfg);

  std::unique_ptr<Clock> clock;
  if (opts.serial) clock = std::make_unique<StepClock>(1e-4);
  else clock = std::make_unique<SteadyClock>();

  std::unique_ptr<ResourceMonitor> monitor;
  if (!opts.replay_slots_path.empty()) {
    monitor = std::make_unique<ResourceMonitor>(
        ResourceMonitor::parse_schedule_file(opts.replay_slots_path));
  } else if (!cfg.pool_control_file.empty()) {
    monitor = std::make_unique<ResourceMonitor>(cfg.pool.total_slots, cfg.pool_control_file,
                                                cfg.pool.slot_poll_interval);
  } else {
    monitor = std::make_unique<ResourceMonitor>(cfg.pool.total_slots);
  }

  EventLog log(cfg.output_dir + "/events.csv");
  RunSummary summary = orchestrate(cfg.pool, cfg.pod, cfg.ppo, task.train_factory, task.fresh_init,
                                   *monitor, *clock, log, cfg.seed, cfg.output_dir, external_cancel);

  write_run_summary(summary, cfg.output_dir + "/summary.txt");

  for (std::size_t rank = 0; rank < summary.final_leaderboard.size(); ++rank) {
    const LeaderboardEntry& e = summary.final_leaderboard[rank];
    CheckpointMeta meta;
    meta.wall_seconds = e.eval_record.wall_seconds;
    meta.env_steps = static_cast<double>(e.eval_record.env_steps);
    meta.score = e.score;
    save_checkpoint(e.artifact, cfg.output_dir + "/leaderboard_rank" + std::to_string(rank) + ".ckpt",
                    &meta);
  }

  if (cfg.task == TaskKind::Stock) {
    std::ofstream reports(cfg.output_dir + "/backtest_reports.csv", std::ios::trunc);
    reports << "rank,pod_id," << report_csv_header() << "\n";
    for (std::size_t rank = 0; rank < summary.final_leaderboard.size(); ++rank) {
      const LeaderboardEntry& e = summary.final_leaderboard[rank];
      BacktestResult bt =
          run_backtest(e.artifact, task.market, cfg.stock, task.windows.backtest_begin,
                       task.windows.backtest_end, cfg.metrics.periods_per_year,
                       cfg.metrics.risk_free_rate);
      reports << rank << "," << e.pod_id << "," << report_csv_row(bt.report) << "\n";
      write_equity_csv(bt.curve, cfg.output_dir + "/backtest_rank" + std::to_string(rank) + "_equity.csv");
      write_trades_csv(bt.trades, *task.market,
                       cfg.output_dir + "/backtest_rank" + std::to_string(rank) + "_trades.csv");
    }
  }

  return 0;
}

/// Backtests a checkpoint file, or every *.ckpt in a directory (batch mode:
/// one row per snapshot ordered by recorded training time).
inline int run_backtest_command(const std::string& checkpoint_path, const ExperimentConfig& cfg,
                                std::ostream& out) {
  if (cfg.task != TaskKind::Stock) throw ConfigError("backtest requires task = stock");
  ExperimentConfig local = cfg;
  local.validate();
  TaskBundle task = build_task(local);

  std::vector<std::string> paths;
  if (std::filesystem::is_directory(checkpoint_path)) {
    for (const auto& entry : std::filesystem::directory_iterator(checkpoint_path)) {
      if (entry.path().extension() == ".ckpt") paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw UsageError("no .ckpt files in '" + checkpoint_path + "'");
  } else {
    paths.push_back(checkpoint_path);
  }

  struct SnapshotRow {
    double wall_seconds;
    std::string path;
    BacktestResult result;
  };
  std::vector<SnapshotRow> rows;
  for (const auto& p : paths) {
    CheckpointMeta meta;
    AgentArtifact artifact = load_checkpoint(p, &meta);
    BacktestResult bt =
        run_backtest(artifact, task.market, local.stock, task.windows.backtest_begin,
                     task.windows.backtest_end, local.metrics.periods_per_year,
                     local.metrics.risk_free_rate);
    rows.push_back(SnapshotRow{meta.wall_seconds, p, std::move(bt)});
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.wall_seconds < b.wall_seconds; });

  if (rows.size() == 1) {
    out << report_table(rows.front().result.report);
    if (!local.output_dir.empty()) {
      std::filesystem::create_directories(local.output_dir);
      write_equity_csv(rows.front().result.curve, local.output_dir + "/backtest_equity.csv");
      write_trades_csv(rows.front().result.trades, *task.market,
                       local.output_dir + "/backtest_trades.csv");
      std::ofstream report(local.output_dir + "/backtest_report.csv", std::ios::trunc);
      report << report_csv_header() << "\n" << report_csv_row(rows.front().result.report) << "\n";
    }
  } else {
    out << "wall_seconds,checkpoint," << report_csv_header() << "\n";
    for (const auto& r : rows) {
      char head[64];
      std::snprintf(head, sizeof(head), "%.6f,", r.wall_seconds);
      out << head << r.path << "," << report_csv_row(r.result.report) << "\n";
    }
  }
  return 0;
}

/// Scores a checkpoint with the standard evaluation protocol on the
/// configured task and prints the record.
inline int run_eval_command(const std::string& checkpoint_path, const ExperimentConfig& cfg,
                            std::ostream& out) {
  ExperimentConfig local = cfg;
  local.validate();
  TaskBundle task = build_task(local);
  AgentArtifact artifact = load_checkpoint(checkpoint_path);
  EvaluationRecord rec = evaluate(artifact.actor, task.train_factory, local.pod.eval_episodes,
                                  local.pod.eval_seed, local.pod.sampled_eval);
  out << "episodes = " << rec.episodic_rewards.size() << "\n";
  out << "mean = " << rec.mean << "\n";
  out << "std = " << rec.std_dev << "\n";
  out << "rewards =";
  for (double r : rec.episodic_rewards) out << " " << r;
  out << "\n";
  return 0;
}

}  // namespace podracer
