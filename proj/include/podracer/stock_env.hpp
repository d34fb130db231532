#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "podracer/common.hpp"
#include "podracer/env.hpp"
#include "podracer/market.hpp"

namespace podracer {

struct StockConfig {
  double initial_capital = 1'000'000.0;
  double max_trade_shares = 100.0;
  double cost_rate = 0.002;  // charged on |trade value| of every executed trade
};

/// Cash plus whole-share holdings at a time index into a MarketData grid.
struct PortfolioState {
  double balance = 0.0;
  std::vector<double> shares;  // whole shares, >= 0 (no shorting)
  std::size_t t = 0;

  double account_value(const MarketData& data) const {
    double v = balance;
    for (std::size_t k = 0; k < shares.size(); ++k) v += shares[k] * data.series[k].close[t];
    return v;
  }
};

struct StockStep {
  PortfolioState state;
  double reward = 0.0;
  bool done = false;
};

struct TradeRecord {
  std::int64_t timestamp = 0;
  std::size_t ticker_index = 0;
  double shares_delta = 0.0;  // signed executed quantity
  double price = 0.0;
  double cost = 0.0;
};

/// One market step. Desired trade per ticker is action_i * max_trade_shares
/// rounded toward zero (no fractional shares). Sells execute before buys so
/// sale proceeds can fund purchases within the same step; every executed
/// trade is clipped to feasibility (held shares when selling, affordable
/// balance including cost when buying) and charged cost_rate * |trade value|.
/// Prices are the close at the current index; the reward is the change of
/// account value across the step.
inline StockStep stock_env_step(const PortfolioState& state, const std::vector<double>& action,
                                const MarketData& data, const StockConfig& cfg,
                                std::vector<TradeRecord>* trades = nullptr) {
  const std::size_t num_tickers = data.tickers.size();
  if (action.size() != num_tickers || state.shares.size() != num_tickers) {
    throw DimensionError("stock_env_step: action " + std::to_string(action.size()) + ", shares " +
                         std::to_string(state.shares.size()) + ", tickers " +
                         std::to_string(num_tickers));
  }
  if (state.t + 1 >= data.length()) {
    throw UsageError("stock_env_step: no next timestamp at t=" + std::to_string(state.t));
  }

  const double value_before = state.account_value(data);
  StockStep out;
  out.state = state;

  auto execute = [&](std::size_t k, double qty) {
    // qty > 0 buys, qty < 0 sells; caller has already clipped to feasibility.
    const double price = data.series[k].close[state.t];
    const double cost = cfg.cost_rate * std::abs(qty) * price;
    out.state.balance -= qty * price + cost;
    out.state.shares[k] += qty;
    if (trades && qty != 0.0) {
      trades->push_back(TradeRecord{data.timestamps[state.t], k, qty, price, cost});
    }
  };

  std::vector<double> desired(num_tickers);
  for (std::size_t k = 0; k < num_tickers; ++k) {
    const double a = std::clamp(action[k], -1.0, 1.0);
    desired[k] = std::trunc(a * cfg.max_trade_shares);
  }
  for (std::size_t k = 0; k < num_tickers; ++k) {
    if (desired[k] < 0.0) execute(k, -std::min(-desired[k], out.state.shares[k]));
  }
  for (std::size_t k = 0; k < num_tickers; ++k) {
    if (desired[k] > 0.0) {
      const double price = data.series[k].close[state.t];
      const double affordable = std::floor(out.state.balance / (price * (1.0 + cfg.cost_rate)));
      execute(k, std::min(desired[k], std::max(affordable, 0.0)));
    }
  }

  out.state.t = state.t + 1;
  out.reward = out.state.account_value(data) - value_before;
  out.done = (out.state.t + 1 >= data.length());
  return out;
}

/// Observation layout (ticker order fixed by MarketData::tickers):
///   [ balance / initial_capital,
///     shares_k                      for each ticker k,
///     close_k[t] / close_k[start]   for each ticker k,
///     indicator_i,k[t]              for each indicator i, each ticker k ]
/// so state_dim = 1 + 2K + 4K with K tickers.
inline std::size_t stock_observation_dim(std::size_t num_tickers) {
  return 1 + 2 * num_tickers + kIndicatorNames.size() * num_tickers;
}

inline std::vector<double> stock_observation(const PortfolioState& state, const MarketData& data,
                                             const StockConfig& cfg, std::size_t window_start) {
  const std::size_t num_tickers = data.tickers.size();
  std::vector<double> obs;
  obs.reserve(stock_observation_dim(num_tickers));
  obs.push_back(state.balance / cfg.initial_capital);
  for (std::size_t k = 0; k < num_tickers; ++k) obs.push_back(state.shares[k]);
  for (std::size_t k = 0; k < num_tickers; ++k) {
    obs.push_back(data.series[k].close[state.t] / data.series[k].close[window_start]);
  }
  for (std::size_t i = 0; i < kIndicatorNames.size(); ++i) {
    for (std::size_t k = 0; k < num_tickers; ++k) {
      obs.push_back(data.series[k].indicators[i][state.t]);
    }
  }
  return obs;
}

/// Gym-style wrapper over one window [start_index, end_index] of a MarketData
/// grid. Deterministic: the rng parameters are unused.
class StockTradingEnv final : public Environment {
public:
  StockTradingEnv(std::shared_ptr<const MarketData> data, StockConfig cfg, std::size_t start_index,
                  std::size_t end_index)
      : data_(std::move(data)), cfg_(cfg), start_(start_index), end_(end_index) {
    if (!data_->has_indicators()) {
      throw UsageError("StockTradingEnv: market data lacks indicators; run compute_indicators");
    }
    if (end_ >= data_->length() || start_ + 1 >= end_ + 1 || end_ <= start_) {
      throw ConfigError("StockTradingEnv: bad window [" + std::to_string(start_) + ", " +
                        std::to_string(end_) + "] for " + std::to_string(data_->length()) + " rows");
    }
    const std::size_t num_tickers = data_->tickers.size();
    spec_.state_dim = stock_observation_dim(num_tickers);
    spec_.action_dim = num_tickers;
    spec_.action_low.assign(num_tickers, -1.0);
    spec_.action_high.assign(num_tickers, 1.0);
    spec_.max_episode_steps = end_ - start_;
    spec_.reward_target = 0.0;
  }

  const EnvSpec& spec() const override { return spec_; }

  std::vector<double> reset(std::mt19937_64&) override {
    state_.balance = cfg_.initial_capital;
    state_.shares.assign(data_->tickers.size(), 0.0);
    state_.t = start_;
    return stock_observation(state_, *data_, cfg_, start_);
  }

  Step step(const std::vector<double>& action, std::mt19937_64&) override {
    StockStep r = stock_env_step(state_, action, *data_, cfg_, trades_ ? trades_ : nullptr);
    state_ = r.state;
    const bool done = r.done || state_.t >= end_;
    return Step{stock_observation(state_, *data_, cfg_, start_), r.reward, done};
  }

  const PortfolioState& portfolio() const { return state_; }
  /// Optional sink for executed trades (used by the backtester).
  void record_trades(std::vector<TradeRecord>* sink) { trades_ = sink; }

private:
  std::shared_ptr<const MarketData> data_;
  StockConfig cfg_;
  std::size_t start_;
  std::size_t end_;
  EnvSpec spec_;
  PortfolioState state_;
  std::vector<TradeRecord>* trades_ = nullptr;
};

}  // namespace podracer
