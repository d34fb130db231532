#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "podracer/common.hpp"

namespace podracer {

// ---------------------------------------------------------------------------
// Timestamps. ISO-8601 UTC, either "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM:SS"
// with an optional trailing "Z". Stored as epoch seconds.
// ---------------------------------------------------------------------------

namespace detail {

inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097LL + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = static_cast<int>(yy + (m <= 2));
}

inline bool parse_fixed_uint(std::string_view s, std::size_t pos, std::size_t len, unsigned& out) {
  if (pos + len > s.size()) return false;
  unsigned v = 0;
  for (std::size_t i = 0; i < len; ++i) {
    const char c = s[pos + i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + static_cast<unsigned>(c - '0');
  }
  out = v;
  return true;
}

}  // namespace detail

inline std::int64_t parse_timestamp(std::string_view s) {
  unsigned y, mo, d, hh = 0, mm = 0, ss = 0;
  const bool date_ok = detail::parse_fixed_uint(s, 0, 4, y) && s.size() > 4 && s[4] == '-' &&
                       detail::parse_fixed_uint(s, 5, 2, mo) && s.size() > 7 && s[7] == '-' &&
                       detail::parse_fixed_uint(s, 8, 2, d);
  if (!date_ok || mo < 1 || mo > 12 || d < 1 || d > 31) {
    throw FormatError("bad timestamp '" + std::string(s) + "'");
  }
  std::size_t rest = 10;
  if (s.size() > rest) {
    if (s[rest] != 'T' && s[rest] != ' ') throw FormatError("bad timestamp '" + std::string(s) + "'");
    const bool time_ok = detail::parse_fixed_uint(s, 11, 2, hh) && s.size() > 13 && s[13] == ':' &&
                         detail::parse_fixed_uint(s, 14, 2, mm) && s.size() > 16 && s[16] == ':' &&
                         detail::parse_fixed_uint(s, 17, 2, ss);
    if (!time_ok || hh > 23 || mm > 59 || ss > 60) {
      throw FormatError("bad timestamp '" + std::string(s) + "'");
    }
    rest = 19;
    if (s.size() == rest + 1 && s[rest] == 'Z') rest += 1;
  }
  if (s.size() != rest) throw FormatError("bad timestamp '" + std::string(s) + "'");
  return detail::days_from_civil(static_cast<int>(y), mo, d) * 86400LL + hh * 3600LL + mm * 60LL + ss;
}

inline std::string format_timestamp(std::int64_t epoch_seconds) {
  std::int64_t days = epoch_seconds / 86400;
  std::int64_t sod = epoch_seconds % 86400;
  if (sod < 0) {
    sod += 86400;
    days -= 1;
  }
  int y;
  unsigned m, d;
  detail::civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y, m, d,
                static_cast<long long>(sod / 3600), static_cast<long long>((sod / 60) % 60),
                static_cast<long long>(sod % 60));
  return buf;
}

// ---------------------------------------------------------------------------
// Market data: aligned OHLCV series per ticker plus derived indicators.
// ---------------------------------------------------------------------------

inline constexpr std::array<const char*, 4> kIndicatorNames = {"macd", "rsi_14", "cci_30", "sma_20"};

struct TickerSeries {
  std::vector<double> open;
  std::vector<double> high;
  std::vector<double> low;
  std::vector<double> close;
  std::vector<double> volume;
  // Filled by compute_indicators, aligned with the price arrays, ordered as
  // kIndicatorNames.
  std::vector<std::vector<double>> indicators;
};

struct MarketData {
  std::vector<std::int64_t> timestamps;  // strictly increasing epoch seconds
  std::vector<std::string> tickers;      // fixed order; defines observation layout
  std::vector<TickerSeries> series;      // parallel to tickers
  std::size_t dropped_rows = 0;

  std::size_t length() const { return timestamps.size(); }
  bool has_indicators() const {
    return !series.empty() && series.front().indicators.size() == kIndicatorNames.size();
  }

  /// Index of the first timestamp >= bound, or length() if none.
  std::size_t lower_bound_index(std::int64_t ts) const {
    std::size_t lo = 0, hi = timestamps.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (timestamps[mid] < ts) lo = mid + 1;
      else hi = mid;
    }
    return lo;
  }
};

/// Parses the CSV format `timestamp,ticker,open,high,low,close,volume`
/// (ISO-8601 UTC timestamps, no quoting) and aligns the requested tickers on
/// their common timestamp grid. Rows whose timestamp is missing for any
/// requested ticker are dropped and counted in dropped_rows. Rows for tickers
/// not in `tickers` are ignored.
inline MarketData load_ohlcv(const std::string& path, const std::vector<std::string>& tickers) {
  if (tickers.empty()) throw ConfigError("load_ohlcv: empty ticker list");
  std::ifstream in(path);
  if (!in) throw FormatError("load_ohlcv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw FormatError("load_ohlcv: empty file '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::array<const char*, 7> expected = {"timestamp", "ticker", "open", "high",
                                               "low",       "close",  "volume"};
  {
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cols.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (i >= cols.size() || cols[i] != expected[i]) {
        throw FormatError("load_ohlcv: missing or misplaced column '" + std::string(expected[i]) +
                          "' in header");
      }
    }
  }

  struct Row {
    double open, high, low, close, volume;
  };
  std::map<std::string, std::size_t> ticker_index;
  for (std::size_t i = 0; i < tickers.size(); ++i) ticker_index[tickers[i]] = i;
  // Per-ticker (timestamp -> row), kept in file order to check monotonicity.
  std::vector<std::vector<std::pair<std::int64_t, Row>>> per_ticker(tickers.size());

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<std::string_view, 7> fields;
    std::string_view sv(line);
    std::size_t start = 0;
    for (std::size_t f = 0; f < 7; ++f) {
      const std::size_t comma = sv.find(',', start);
      if (f < 6 && comma == std::string_view::npos) {
        throw FormatError("load_ohlcv: row " + std::to_string(line_no) + " has " +
                          std::to_string(f + 1) + " fields, expected 7");
      }
      fields[f] = sv.substr(start, (f < 6 ? comma : sv.size()) - start);
      start = comma + 1;
    }
    const auto it = ticker_index.find(std::string(fields[1]));
    if (it == ticker_index.end()) continue;

    const std::int64_t ts = parse_timestamp(fields[0]);
    Row row{};
    const std::array<double*, 5> dst = {&row.open, &row.high, &row.low, &row.close, &row.volume};
    for (std::size_t f = 0; f < 5; ++f) {
      const std::string_view v = fields[2 + f];
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), *dst[f]);
      if (ec != std::errc() || p != v.data() + v.size()) {
        throw FormatError("load_ohlcv: row " + std::to_string(line_no) + ": bad number '" +
                          std::string(v) + "' in column " + expected[2 + f]);
      }
    }
    if (row.low > std::min(row.open, row.close) || row.high < std::max(row.open, row.close) ||
        row.volume < 0.0) {
      throw DataError("load_ohlcv: row " + std::to_string(line_no) +
                      ": OHLCV invariant violated (low <= open/close <= high, volume >= 0)");
    }
    auto& rows = per_ticker[it->second];
    if (!rows.empty() && ts <= rows.back().first) {
      throw DataError("load_ohlcv: row " + std::to_string(line_no) + ": timestamp not increasing for " +
                      std::string(fields[1]));
    }
    rows.emplace_back(ts, row);
  }

  for (std::size_t i = 0; i < tickers.size(); ++i) {
    if (per_ticker[i].empty()) throw DataError("load_ohlcv: ticker '" + tickers[i] + "' not found");
  }

  // Intersect timestamp grids (each is sorted and unique).
  std::vector<std::int64_t> grid;
  for (const auto& [ts, row] : per_ticker[0]) grid.push_back(ts);
  for (std::size_t i = 1; i < tickers.size(); ++i) {
    std::vector<std::int64_t> other;
    for (const auto& [ts, row] : per_ticker[i]) other.push_back(ts);
    std::vector<std::int64_t> merged;
    std::size_t a = 0, b = 0;
    while (a < grid.size() && b < other.size()) {
      if (grid[a] < other[b]) ++a;
      else if (other[b] < grid[a]) ++b;
      else {
        merged.push_back(grid[a]);
        ++a;
        ++b;
      }
    }
    grid = std::move(merged);
  }
  if (grid.empty()) throw DataError("load_ohlcv: tickers share no common timestamps");

  MarketData data;
  data.tickers = tickers;
  data.timestamps = grid;
  data.series.resize(tickers.size());
  std::size_t kept_total = 0;
  for (std::size_t i = 0; i < tickers.size(); ++i) {
    TickerSeries& s = data.series[i];
    std::size_t g = 0;
    for (const auto& [ts, row] : per_ticker[i]) {
      if (g < grid.size() && ts == grid[g]) {
        s.open.push_back(row.open);
        s.high.push_back(row.high);
        s.low.push_back(row.low);
        s.close.push_back(row.close);
        s.volume.push_back(row.volume);
        ++g;
        ++kept_total;
      }
    }
  }
  std::size_t parsed_total = 0;
  for (const auto& rows : per_ticker) parsed_total += rows.size();
  data.dropped_rows = parsed_total - kept_total;
  return data;
}

// ---------------------------------------------------------------------------
// Technical indicators: MACD(12,26,9) line, RSI(14) with Wilder smoothing,
// CCI(30) on the typical price, SMA(20). Each series is aligned with the
// prices; entries before an indicator's first defined index are filled with
// that first defined value.
// ---------------------------------------------------------------------------

constexpr std::size_t kIndicatorMinRows = 35;

namespace detail {

inline std::vector<double> ema(const std::vector<double>& x, std::size_t period) {
  const double alpha = 2.0 / (static_cast<double>(period) + 1.0);
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  out[0] = x[0];
  for (std::size_t t = 1; t < x.size(); ++t) out[t] = alpha * x[t] + (1.0 - alpha) * out[t - 1];
  return out;
}

inline void backfill(std::vector<double>& x, std::size_t first_defined) {
  for (std::size_t t = 0; t < first_defined && t < x.size(); ++t) x[t] = x[first_defined];
}

inline std::vector<double> indicator_macd(const TickerSeries& s) {
  const std::vector<double> fast = ema(s.close, 12);
  const std::vector<double> slow = ema(s.close, 26);
  std::vector<double> out(s.close.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = fast[t] - slow[t];
  return out;
}

inline std::vector<double> indicator_rsi(const TickerSeries& s, std::size_t period = 14) {
  const std::size_t n = s.close.size();
  std::vector<double> out(n, 50.0);
  double avg_gain = 0.0, avg_loss = 0.0;
  for (std::size_t t = 1; t <= period; ++t) {
    const double d = s.close[t] - s.close[t - 1];
    avg_gain += std::max(d, 0.0);
    avg_loss += std::max(-d, 0.0);
  }
  avg_gain /= static_cast<double>(period);
  avg_loss /= static_cast<double>(period);
  auto rsi_of = [](double g, double l) {
    if (g == 0.0 && l == 0.0) return 50.0;  // flat series convention
    if (l == 0.0) return 100.0;
    return 100.0 - 100.0 / (1.0 + g / l);
  };
  out[period] = rsi_of(avg_gain, avg_loss);
  for (std::size_t t = period + 1; t < n; ++t) {
    const double d = s.close[t] - s.close[t - 1];
    avg_gain = (avg_gain * (period - 1) + std::max(d, 0.0)) / static_cast<double>(period);
    avg_loss = (avg_loss * (period - 1) + std::max(-d, 0.0)) / static_cast<double>(period);
    out[t] = rsi_of(avg_gain, avg_loss);
  }
  backfill(out, period);
  return out;
}

inline std::vector<double> indicator_cci(const TickerSeries& s, std::size_t period = 30) {
  const std::size_t n = s.close.size();
  std::vector<double> tp(n);
  for (std::size_t t = 0; t < n; ++t) tp[t] = (s.high[t] + s.low[t] + s.close[t]) / 3.0;
  std::vector<double> out(n, 0.0);
  for (std::size_t t = period - 1; t < n; ++t) {
    double sma = 0.0;
    for (std::size_t k = t + 1 - period; k <= t; ++k) sma += tp[k];
    sma /= static_cast<double>(period);
    double md = 0.0;
    for (std::size_t k = t + 1 - period; k <= t; ++k) md += std::abs(tp[k] - sma);
    md /= static_cast<double>(period);
    out[t] = (md == 0.0) ? 0.0 : (tp[t] - sma) / (0.015 * md);
  }
  backfill(out, period - 1);
  return out;
}

inline std::vector<double> indicator_sma(const TickerSeries& s, std::size_t period = 20) {
  const std::size_t n = s.close.size();
  std::vector<double> out(n, 0.0);
  double window = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    window += s.close[t];
    if (t >= period) window -= s.close[t - period];
    if (t + 1 >= period) out[t] = window / static_cast<double>(period);
  }
  backfill(out, period - 1);
  return out;
}

}  // namespace detail

/// Returns a copy of `data` with the four indicator series attached to every
/// ticker. Requires at least kIndicatorMinRows rows so the longest warm-up
/// window (CCI's 30) is covered with margin.
inline MarketData compute_indicators(const MarketData& data) {
  if (data.length() < kIndicatorMinRows) {
    throw DataError("compute_indicators: need at least " + std::to_string(kIndicatorMinRows) +
                    " rows, have " + std::to_string(data.length()));
  }
  MarketData out = data;
  for (auto& s : out.series) {
    s.indicators.clear();
    s.indicators.push_back(detail::indicator_macd(s));
    s.indicators.push_back(detail::indicator_rsi(s));
    s.indicators.push_back(detail::indicator_cci(s));
    s.indicators.push_back(detail::indicator_sma(s));
    for (const auto& ind : s.indicators) {
      if (!all_finite(ind.data(), ind.size())) {
        throw NumericError("compute_indicators: non-finite indicator value");
      }
    }
  }
  return out;
}

}  // namespace podracer
