#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "podracer/common.hpp"
#include "podracer/metrics.hpp"
#include "podracer/pod.hpp"
#include "podracer/ppo.hpp"
#include "podracer/stock_env.hpp"
#include "podracer/tournament.hpp"

namespace podracer {

enum class TaskKind { PointMass, Stock };

struct DataConfig {
  std::string csv_path;
  std::vector<std::string> tickers;
  DateSplit split;
};

struct MetricsConfig {
  std::size_t periods_per_year = kMinutePeriodsPerYear;
  double risk_free_rate = 0.0;
};

/// Full experiment description. Everything the run produces can be
/// regenerated from this plus the seed.
struct ExperimentConfig {
  TaskKind task = TaskKind::PointMass;
  std::uint64_t seed = 1;
  std::string output_dir;  // empty = resolve via --output / PODRACER_OUTPUT
  std::vector<std::size_t> hidden_sizes = {64, 64};
  PpoConfig ppo;
  PodConfig pod;
  PoolConfig pool;
  std::string pool_control_file;
  DataConfig data;
  StockConfig stock;
  MetricsConfig metrics;

  void validate() const {
    ppo.validate();
    pod.validate(ppo);
    pool.validate();
    if (hidden_sizes.empty()) throw ConfigError("net.hidden_sizes must not be empty");
    if (task == TaskKind::Stock) {
      if (data.csv_path.empty()) throw ConfigError("data.csv_path is required for task = stock");
      if (!std::filesystem::exists(data.csv_path)) {
        throw ConfigError("data.csv_path '" + data.csv_path + "' does not exist");
      }
      if (data.tickers.empty()) throw ConfigError("data.tickers is required for task = stock");
      if (data.split.train_end >= data.split.backtest_start) {
        throw ConfigError("data.train_end must precede data.backtest_start (no overlap)");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Key/value config text. One `key = value` pair per line, `#` comments,
// dotted keys. Lists are comma-separated. Optional values accept `none`.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

struct ConfigKeyTable {
  using Setter = std::function<void(ExperimentConfig&, const std::string& value, const std::string& where)>;
  std::vector<std::pair<std::string, Setter>> keys;

  void add(std::string name, Setter s) { keys.emplace_back(std::move(name), std::move(s)); }

  const Setter* find(const std::string& name) const {
    for (const auto& [k, s] : keys) {
      if (k == name) return &s;
    }
    return nullptr;
  }

  std::string nearest(const std::string& name) const {
    std::string best;
    std::size_t best_d = static_cast<std::size_t>(-1);
    for (const auto& [k, s] : keys) {
      const std::size_t d = levenshtein(name, k);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return best;
  }
};

inline double parse_double(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected a number, got '" + v + "'");
  }
}

inline std::uint64_t parse_uint(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    const unsigned long long u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected a non-negative integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(where + ": expected true or false, got '" + v + "'");
}

inline std::optional<double> parse_opt_double(const std::string& v, const std::string& where) {
  if (v == "none") return std::nullopt;
  return parse_double(v, where);
}

inline std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(v);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline const ConfigKeyTable& config_keys() {
  static const ConfigKeyTable table = [] {
    ConfigKeyTable t;
    using C = ExperimentConfig;
    t.add("task", [](C& c, const std::string& v, const std::string& w) {
      if (v == "pointmass") c.task = TaskKind::PointMass;
      else if (v == "stock") c.task = TaskKind::Stock;
      else throw ConfigError(w + ": task must be pointmass or stock, got '" + v + "'");
    });
    t.add("seed", [](C& c, const std::string& v, const std::string& w) { c.seed = parse_uint(v, w); });
    t.add("output_dir", [](C& c, const std::string& v, const std::string&) { c.output_dir = v; });
    t.add("net.hidden_sizes", [](C& c, const std::string& v, const std::string& w) {
      c.hidden_sizes.clear();
      for (const auto& item : parse_list(v)) c.hidden_sizes.push_back(parse_uint(item, w));
    });
    t.add("net.activation", [](C&, const std::string& v, const std::string& w) {
      if (v != "tanh") throw ConfigError(w + ": only tanh activation is supported");
    });
    t.add("net.init", [](C&, const std::string& v, const std::string& w) {
      if (v != "uniform_fan_in") throw ConfigError(w + ": only uniform_fan_in init is supported");
    });

    t.add("ppo.gamma", [](C& c, const std::string& v, const std::string& w) { c.ppo.gamma = parse_double(v, w); });
    t.add("ppo.gae_lambda", [](C& c, const std::string& v, const std::string& w) { c.ppo.gae_lambda = parse_double(v, w); });
    t.add("ppo.clip_eps", [](C& c, const std::string& v, const std::string& w) { c.ppo.clip_eps = parse_double(v, w); });
    t.add("ppo.entropy_coef", [](C& c, const std::string& v, const std::string& w) { c.ppo.entropy_coef = parse_double(v, w); });
    t.add("ppo.value_coef", [](C& c, const std::string& v, const std::string& w) { c.ppo.value_coef = parse_double(v, w); });
    t.add("ppo.epochs_per_update", [](C& c, const std::string& v, const std::string& w) { c.ppo.epochs_per_update = parse_uint(v, w); });
    t.add("ppo.minibatch_size", [](C& c, const std::string& v, const std::string& w) { c.ppo.minibatch_size = parse_uint(v, w); });
    t.add("ppo.buffer_size", [](C& c, const std::string& v, const std::string& w) { c.ppo.buffer_size = parse_uint(v, w); });
    t.add("ppo.learning_rate", [](C& c, const std::string& v, const std::string& w) { c.ppo.learning_rate = parse_double(v, w); });

    t.add("pod.num_workers", [](C& c, const std::string& v, const std::string& w) { c.pod.num_workers = parse_uint(v, w); });
    t.add("pod.envs_per_worker", [](C& c, const std::string& v, const std::string& w) { c.pod.envs_per_worker = parse_uint(v, w); });
    t.add("pod.num_learners", [](C& c, const std::string& v, const std::string& w) { c.pod.num_learners = parse_uint(v, w); });
    t.add("pod.rollout_horizon", [](C& c, const std::string& v, const std::string& w) { c.pod.rollout_horizon = parse_uint(v, w); });
    t.add("pod.eval_episodes", [](C& c, const std::string& v, const std::string& w) { c.pod.eval_episodes = parse_uint(v, w); });
    t.add("pod.eval_interval_steps", [](C& c, const std::string& v, const std::string& w) { c.pod.eval_interval_steps = static_cast<std::int64_t>(parse_uint(v, w)); });
    t.add("pod.eval_seed", [](C& c, const std::string& v, const std::string& w) { c.pod.eval_seed = parse_uint(v, w); });
    t.add("pod.sampled_eval", [](C& c, const std::string& v, const std::string& w) { c.pod.sampled_eval = parse_bool(v, w); });
    t.add("pod.async_eval", [](C& c, const std::string& v, const std::string& w) { c.pod.async_eval = parse_bool(v, w); });
    t.add("pod.stop.max_steps", [](C& c, const std::string& v, const std::string& w) { c.pod.stop.max_steps = static_cast<std::int64_t>(parse_uint(v, w)); });
    t.add("pod.stop.max_seconds", [](C& c, const std::string& v, const std::string& w) { c.pod.stop.max_seconds = parse_double(v, w); });
    t.add("pod.stop.target_reward", [](C& c, const std::string& v, const std::string& w) { c.pod.stop.target_reward = parse_opt_double(v, w); });

    t.add("pool.max_pods", [](C& c, const std::string& v, const std::string& w) { c.pool.max_pods = parse_uint(v, w); });
    t.add("pool.total_slots", [](C& c, const std::string& v, const std::string& w) { c.pool.total_slots = parse_uint(v, w); });
    t.add("pool.pods_spawned_limit", [](C& c, const std::string& v, const std::string& w) { c.pool.pods_spawned_limit = parse_uint(v, w); });
    t.add("pool.target_reward", [](C& c, const std::string& v, const std::string& w) { c.pool.target_reward = parse_opt_double(v, w); });
    t.add("pool.leaderboard_capacity", [](C& c, const std::string& v, const std::string& w) { c.pool.leaderboard_capacity = parse_uint(v, w); });
    t.add("pool.slot_poll_interval", [](C& c, const std::string& v, const std::string& w) { c.pool.slot_poll_interval = parse_double(v, w); });
    t.add("pool.control_file", [](C& c, const std::string& v, const std::string&) {
      c.pool_control_file = (v == "none") ? "" : v;
    });
    t.add("pool.generator.top_k", [](C& c, const std::string& v, const std::string& w) { c.pool.generator.top_k = parse_uint(v, w); });
    t.add("pool.generator.mutation_sigma", [](C& c, const std::string& v, const std::string& w) { c.pool.generator.mutation_sigma = parse_double(v, w); });
    t.add("pool.generator.fresh_prob", [](C& c, const std::string& v, const std::string& w) { c.pool.generator.fresh_prob = parse_double(v, w); });

    t.add("data.csv_path", [](C& c, const std::string& v, const std::string&) {
      c.data.csv_path = (v == "none") ? "" : v;
    });
    t.add("data.tickers", [](C& c, const std::string& v, const std::string&) { c.data.tickers = parse_list(v); });
    t.add("data.train_start", [](C& c, const std::string& v, const std::string&) { c.data.split.train_start = parse_timestamp(v); });
    t.add("data.train_end", [](C& c, const std::string& v, const std::string&) { c.data.split.train_end = parse_timestamp(v); });
    t.add("data.backtest_start", [](C& c, const std::string& v, const std::string&) { c.data.split.backtest_start = parse_timestamp(v); });
    t.add("data.backtest_end", [](C& c, const std::string& v, const std::string&) { c.data.split.backtest_end = parse_timestamp(v); });

    t.add("stock.initial_capital", [](C& c, const std::string& v, const std::string& w) { c.stock.initial_capital = parse_double(v, w); });
    t.add("stock.max_trade_shares", [](C& c, const std::string& v, const std::string& w) { c.stock.max_trade_shares = parse_double(v, w); });
    t.add("stock.cost_rate", [](C& c, const std::string& v, const std::string& w) { c.stock.cost_rate = parse_double(v, w); });

    t.add("metrics.periods_per_year", [](C& c, const std::string& v, const std::string& w) { c.metrics.periods_per_year = parse_uint(v, w); });
    t.add("metrics.risk_free_rate", [](C& c, const std::string& v, const std::string& w) { c.metrics.risk_free_rate = parse_double(v, w); });
    return t;
  }();
  return table;
}

}  // namespace detail

/// Parses config text. Unknown keys report the nearest known key; value
/// errors carry the file name and line number.
inline ExperimentConfig parse_config_text(const std::string& text, const std::string& source_name) {
  ExperimentConfig cfg;
  const auto& table = detail::config_keys();
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected 'key = value', got '" + stripped + "'");
    }
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    const auto* setter = table.find(key);
    if (!setter) {
      throw ConfigError(where + ": unknown key '" + key + "' (nearest known key: '" +
                        table.nearest(key) + "')");
    }
    (*setter)(cfg, value, where);
  }
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

/// Serializes the effective config in the canonical key order. The output
/// parses back to an identical config (doubles use round-trip precision).
inline std::string echo_config(const ExperimentConfig& c) {
  std::ostringstream out;
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string("none"); };
  auto str_or_none = [](const std::string& s) { return s.empty() ? std::string("none") : s; };

  out << "task = " << (c.task == TaskKind::PointMass ? "pointmass" : "stock") << "\n";
  out << "seed = " << c.seed << "\n";
  out << "output_dir = " << str_or_none(c.output_dir) << "\n";
  out << "net.hidden_sizes = ";
  for (std::size_t i = 0; i < c.hidden_sizes.size(); ++i) {
    out << (i ? "," : "") << c.hidden_sizes[i];
  }
  out << "\n";
  out << "net.activation = tanh\n";
  out << "net.init = uniform_fan_in\n";
  out << "ppo.gamma = " << num(c.ppo.gamma) << "\n";
  out << "ppo.gae_lambda = " << num(c.ppo.gae_lambda) << "\n";
  out << "ppo.clip_eps = " << num(c.ppo.clip_eps) << "\n";
  out << "ppo.entropy_coef = " << num(c.ppo.entropy_coef) << "\n";
  out << "ppo.value_coef = " << num(c.ppo.value_coef) << "\n";
  out << "ppo.epochs_per_update = " << c.ppo.epochs_per_update << "\n";
  out << "ppo.minibatch_size = " << c.ppo.minibatch_size << "\n";
  out << "ppo.buffer_size = " << c.ppo.buffer_size << "\n";
  out << "ppo.learning_rate = " << num(c.ppo.learning_rate) << "\n";
  out << "pod.num_workers = " << c.pod.num_workers << "\n";
  out << "pod.envs_per_worker = " << c.pod.envs_per_worker << "\n";
  out << "pod.num_learners = " << c.pod.num_learners << "\n";
  out << "pod.rollout_horizon = " << c.pod.rollout_horizon << "\n";
  out << "pod.eval_episodes = " << c.pod.eval_episodes << "\n";
  out << "pod.eval_interval_steps = " << c.pod.eval_interval_steps << "\n";
  out << "pod.eval_seed = " << c.pod.eval_seed << "\n";
  out << "pod.sampled_eval = " << (c.pod.sampled_eval ? "true" : "false") << "\n";
  out << "pod.async_eval = " << (c.pod.async_eval ? "true" : "false") << "\n";
  out << "pod.stop.max_steps = " << c.pod.stop.max_steps << "\n";
  out << "pod.stop.max_seconds = " << num(c.pod.stop.max_seconds) << "\n";
  out << "pod.stop.target_reward = " << opt(c.pod.stop.target_reward) << "\n";
  out << "pool.max_pods = " << c.pool.max_pods << "\n";
  out << "pool.total_slots = " << c.pool.total_slots << "\n";
  out << "pool.pods_spawned_limit = " << c.pool.pods_spawned_limit << "\n";
  out << "pool.target_reward = " << opt(c.pool.target_reward) << "\n";
  out << "pool.leaderboard_capacity = " << c.pool.leaderboard_capacity << "\n";
  out << "pool.slot_poll_interval = " << num(c.pool.slot_poll_interval) << "\n";
  out << "pool.control_file = " << str_or_none(c.pool_control_file) << "\n";
  out << "pool.generator.top_k = " << c.pool.generator.top_k << "\n";
  out << "pool.generator.mutation_sigma = " << num(c.pool.generator.mutation_sigma) << "\n";
  out << "pool.generator.fresh_prob = " << num(c.pool.generator.fresh_prob) << "\n";
  out << "data.csv_path = " << str_or_none(c.data.csv_path) << "\n";
  out << "data.tickers = ";
  for (std::size_t i = 0; i < c.data.tickers.size(); ++i) out << (i ? "," : "") << c.data.tickers[i];
  out << "\n";
  out << "data.train_start = " << format_timestamp(c.data.split.train_start) << "\n";
  out << "data.train_end = " << format_timestamp(c.data.split.train_end) << "\n";
  out << "data.backtest_start = " << format_timestamp(c.data.split.backtest_start) << "\n";
  out << "data.backtest_end = " << format_timestamp(c.data.split.backtest_end) << "\n";
  out << "stock.initial_capital = " << num(c.stock.initial_capital) << "\n";
  out << "stock.max_trade_shares = " << num(c.stock.max_trade_shares) << "\n";
  out << "stock.cost_rate = " << num(c.stock.cost_rate) << "\n";
  out << "metrics.periods_per_year = " << c.metrics.periods_per_year << "\n";
  out << "metrics.risk_free_rate = " << num(c.metrics.risk_free_rate) << "\n";
  return out.str();
}

}  // namespace podracer
