#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "podracer/artifact.hpp"
#include "podracer/common.hpp"
#include "podracer/market.hpp"
#include "podracer/stock_env.hpp"

namespace podracer {

// US trading minutes per year: 252 sessions of 390 minutes.
constexpr std::size_t kMinutePeriodsPerYear = 252 * 390;
constexpr std::size_t kDailyPeriodsPerYear = 252;

struct EquityCurve {
  std::vector<std::int64_t> timestamps;
  std::vector<double> values;  // account values, values[0] = initial capital

  std::size_t size() const { return values.size(); }

  void validate() const {
    if (timestamps.size() != values.size()) {
      throw DimensionError("EquityCurve: " + std::to_string(timestamps.size()) + " timestamps vs " +
                           std::to_string(values.size()) + " values");
    }
    for (double v : values) {
      if (!(v > 0.0)) throw DataError("EquityCurve: values must be positive");
    }
  }
};

/// (final - initial) / initial.
inline double cumulative_return(const EquityCurve& curve) {
  if (curve.size() < 2) throw UsageError("cumulative_return: need at least 2 points");
  if (curve.values.front() == 0.0) throw DomainError("cumulative_return: initial value is zero");
  return (curve.values.back() - curve.values.front()) / curve.values.front();
}

/// Largest relative loss from a running peak; 0 for nondecreasing curves,
/// always <= 0.
inline double max_drawdown(const EquityCurve& curve) {
  if (curve.size() < 1) throw UsageError("max_drawdown: empty curve");
  double peak = curve.values.front();
  double worst = 0.0;
  for (double v : curve.values) {
    peak = std::max(peak, v);
    worst = std::min(worst, (v - peak) / peak);
  }
  return worst;
}

struct AnnualizedStats {
  double annual_return = 0.0;
  double annual_volatility = 0.0;
};

/// Geometric annualized return over per-period simple returns, and sample
/// (N-1) volatility scaled by sqrt(periods_per_year).
inline AnnualizedStats annualized_stats(const EquityCurve& curve, std::size_t periods_per_year) {
  if (curve.size() < 3) throw UsageError("annualized_stats: need at least 3 points");
  if (periods_per_year == 0) throw ConfigError("annualized_stats: periods_per_year must be > 0");
  const std::size_t n = curve.size() - 1;
  std::vector<double> returns(n);
  double log_growth = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    returns[t] = curve.values[t + 1] / curve.values[t] - 1.0;
    if (returns[t] <= -1.0) {
      throw DomainError("annualized_stats: per-period return <= -100% at index " + std::to_string(t));
    }
    log_growth += std::log1p(returns[t]);
  }
  AnnualizedStats out;
  out.annual_return =
      std::expm1(log_growth * static_cast<double>(periods_per_year) / static_cast<double>(n));
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  var /= static_cast<double>(n - 1);
  out.annual_volatility = std::sqrt(var) * std::sqrt(static_cast<double>(periods_per_year));
  return out;
}

/// Annualized arithmetic-mean excess return over annualized volatility.
/// risk_free_rate is annual and divided evenly across periods.
inline double sharpe(const EquityCurve& curve, std::size_t periods_per_year,
                     double risk_free_rate = 0.0) {
  if (curve.size() < 3) throw UsageError("sharpe: need at least 3 points");
  const std::size_t n = curve.size() - 1;
  double mean = 0.0;
  std::vector<double> returns(n);
  for (std::size_t t = 0; t < n; ++t) {
    returns[t] = curve.values[t + 1] / curve.values[t] - 1.0;
    mean += returns[t];
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  var /= static_cast<double>(n - 1);
  if (var == 0.0) throw DomainError("sharpe: zero volatility");
  const double ppy = static_cast<double>(periods_per_year);
  const double excess = mean - risk_free_rate / ppy;
  return excess * ppy / (std::sqrt(var) * std::sqrt(ppy));
}

/// Annual return over |max drawdown|; undefined for drawdown-free curves.
inline double calmar(const EquityCurve& curve, std::size_t periods_per_year) {
  const double mdd = max_drawdown(curve);
  if (mdd == 0.0) throw DomainError("calmar: zero drawdown");
  return annualized_stats(curve, periods_per_year).annual_return / std::abs(mdd);
}

struct BacktestReport {
  double cumulative_return = 0.0;
  double annual_return = 0.0;
  double annual_volatility = 0.0;
  double max_drawdown = 0.0;
  std::optional<double> sharpe;  // absent when volatility is zero
  std::optional<double> calmar;  // absent when drawdown is zero
  std::size_t periods_per_year = 0;
};

inline BacktestReport make_report(const EquityCurve& curve, std::size_t periods_per_year,
                                  double risk_free_rate = 0.0) {
  BacktestReport r;
  r.periods_per_year = periods_per_year;
  r.cumulative_return = cumulative_return(curve);
  const AnnualizedStats ann = annualized_stats(curve, periods_per_year);
  r.annual_return = ann.annual_return;
  r.annual_volatility = ann.annual_volatility;
  r.max_drawdown = max_drawdown(curve);
  if (ann.annual_volatility > 0.0) r.sharpe = sharpe(curve, periods_per_year, risk_free_rate);
  if (r.max_drawdown < 0.0) r.calmar = calmar(curve, periods_per_year);
  return r;
}

// ---------------------------------------------------------------------------
// Train/backtest split.
// ---------------------------------------------------------------------------

struct DateSplit {
  std::int64_t train_start = parse_timestamp("2016-01-01");
  std::int64_t train_end = parse_timestamp("2020-05-25");      // inclusive
  std::int64_t backtest_start = parse_timestamp("2020-05-26");
  std::int64_t backtest_end = parse_timestamp("2021-05-26");   // inclusive
};

struct SplitWindows {
  std::size_t train_begin = 0;  // index range [begin, end], inclusive
  std::size_t train_end = 0;
  std::size_t backtest_begin = 0;
  std::size_t backtest_end = 0;
};

inline SplitWindows resolve_split(const MarketData& data, const DateSplit& split) {
  if (split.train_end >= split.backtest_start) {
    throw ConfigError("split: train window [.., " + format_timestamp(split.train_end) +
                      "] overlaps backtest start " + format_timestamp(split.backtest_start));
  }
  if (split.train_start > split.train_end || split.backtest_start > split.backtest_end) {
    throw ConfigError("split: start date after end date");
  }
  SplitWindows w;
  w.train_begin = data.lower_bound_index(split.train_start);
  w.train_end = data.lower_bound_index(split.train_end + 1);
  w.backtest_begin = data.lower_bound_index(split.backtest_start);
  w.backtest_end = data.lower_bound_index(split.backtest_end + 1);
  if (w.train_end <= w.train_begin + 1) throw DataError("split: train window has < 2 rows");
  if (w.backtest_end <= w.backtest_begin + 1) throw DataError("split: backtest window has < 2 rows");
  w.train_end -= 1;
  w.backtest_end -= 1;
  return w;
}

// ---------------------------------------------------------------------------
// Backtest execution.
// ---------------------------------------------------------------------------

struct BacktestResult {
  EquityCurve curve;
  BacktestReport report;
  std::vector<TradeRecord> trades;
};

/// Deterministic rollout of the artifact's mean policy over
/// [window_begin, window_end] of `data`, starting from the configured initial
/// capital. The curve holds the account value at every timestamp of the
/// window.
inline BacktestResult run_backtest(const AgentArtifact& artifact,
                                   std::shared_ptr<const MarketData> data, const StockConfig& cfg,
                                   std::size_t window_begin, std::size_t window_end,
                                   std::size_t periods_per_year, double risk_free_rate = 0.0) {
  auto env = std::make_unique<StockTradingEnv>(data, cfg, window_begin, window_end);
  const EnvSpec& spec = env->spec();
  if (spec.state_dim != artifact.actor.mean_net.input_dim() ||
      spec.action_dim != artifact.actor.action_dim()) {
    throw DimensionError("run_backtest: artifact dims (" +
                         std::to_string(artifact.actor.mean_net.input_dim()) + "," +
                         std::to_string(artifact.actor.action_dim()) + ") vs env (" +
                         std::to_string(spec.state_dim) + "," + std::to_string(spec.action_dim) + ")");
  }

  BacktestResult out;
  env->record_trades(&out.trades);
  std::mt19937_64 rng(0);  // stock env ignores the stream
  std::vector<double> obs = env->reset(rng);
  out.curve.timestamps.push_back(data->timestamps[window_begin]);
  out.curve.values.push_back(env->portfolio().account_value(*data));

  bool done = false;
  while (!done) {
    Tensor2 state(1, spec.state_dim);
    std::copy(obs.begin(), obs.end(), state.row(0));
    Tensor2 mean = policy_mean(artifact.actor, state);
    std::vector<double> action(spec.action_dim);
    for (std::size_t d = 0; d < spec.action_dim; ++d) {
      action[d] = std::clamp(mean.at(0, d), spec.action_low[d], spec.action_high[d]);
    }
    Environment::Step s = env->step(action, rng);
    obs = s.state;
    done = s.done;
    out.curve.timestamps.push_back(data->timestamps[env->portfolio().t]);
    out.curve.values.push_back(env->portfolio().account_value(*data));
  }
  out.curve.validate();
  out.report = make_report(out.curve, periods_per_year, risk_free_rate);
  return out;
}

// ---------------------------------------------------------------------------
// Emission helpers (formats shared by the CLI and tests).
// ---------------------------------------------------------------------------

inline std::string report_csv_header() {
  return "cumulative_return,annual_return,annual_volatility,max_drawdown,sharpe,calmar,"
         "periods_per_year";
}

inline std::string report_csv_row(const BacktestReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%zu", r.cumulative_return,
                r.annual_return, r.annual_volatility, r.max_drawdown,
                r.sharpe ? *r.sharpe : std::nan(""), r.calmar ? *r.calmar : std::nan(""),
                r.periods_per_year);
  return buf;
}

inline std::string report_table(const BacktestReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "cumulative return   %10.4f%%\n"
                "annual return       %10.4f%%\n"
                "annual volatility   %10.4f%%\n"
                "max drawdown        %10.4f%%\n"
                "sharpe ratio        %10s\n"
                "calmar ratio        %10s\n",
                100.0 * r.cumulative_return, 100.0 * r.annual_return, 100.0 * r.annual_volatility,
                100.0 * r.max_drawdown,
                r.sharpe ? (std::to_string(*r.sharpe)).c_str() : "n/a",
                r.calmar ? (std::to_string(*r.calmar)).c_str() : "n/a");
  return buf;
}

inline void write_equity_csv(const EquityCurve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  out << "timestamp,account_value\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    char line[96];
    std::snprintf(line, sizeof(line), "%s,%.10g\n", format_timestamp(curve.timestamps[i]).c_str(),
                  curve.values[i]);
    out << line;
  }
}

inline void write_trades_csv(const std::vector<TradeRecord>& trades, const MarketData& data,
                             const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  out << "timestamp,ticker,shares_delta,price,cost\n";
  for (const auto& t : trades) {
    char line[160];
    std::snprintf(line, sizeof(line), "%s,%s,%.0f,%.10g,%.10g\n",
                  format_timestamp(t.timestamp).c_str(), data.tickers[t.ticker_index].c_str(),
                  t.shares_delta, t.price, t.cost);
    out << line;
  }
}

}  // namespace podracer
