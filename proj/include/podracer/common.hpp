#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

namespace podracer {

// ---------------------------------------------------------------------------
// Error types. Everything derives from std::runtime_error so callers can
// catch broadly; the distinct types exist so tests can assert the category.
// ---------------------------------------------------------------------------

/// Shape or length mismatch between two operands.
class DimensionError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value where a finite one is required.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// API misuse: stale cache, empty input list, buffer under/overflow.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (CSV, config, control file).
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Structurally valid input that violates a data invariant.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint bytes fail CRC or structural validation.
class CorruptionError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// File declares a format version newer than this build supports.
class VersionError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Mathematically undefined request (zero volatility Sharpe, zero drawdown
/// Calmar, division by a zero initial value).
class DomainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Seed derivation. All randomness in the library flows from one root seed
// through this function, so any component can be replayed in isolation by
// deriving the same stream.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child seed from a parent seed and a path of integer tags.
/// derive_seed(s, a, b) != derive_seed(s, b, a) for a != b.
template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t base, Tags... tags) {
  std::uint64_t s = splitmix64(base);
  ((s = splitmix64(s ^ splitmix64(static_cast<std::uint64_t>(tags)))), ...);
  return s;
}

// Stream tags used across modules; keeps derivation paths collision-free.
namespace seed_tag {
constexpr std::uint64_t kVecEnv = 0x01;
constexpr std::uint64_t kCollect = 0x02;
constexpr std::uint64_t kLearner = 0x03;
constexpr std::uint64_t kEval = 0x04;
constexpr std::uint64_t kInit = 0x05;
constexpr std::uint64_t kMutate = 0x06;
constexpr std::uint64_t kPool = 0x07;
constexpr std::uint64_t kEpisode = 0x08;
}  // namespace seed_tag

// ---------------------------------------------------------------------------
// Clocks. Training code never calls std::chrono directly; it asks a Clock.
// The step clock makes serial runs bit-reproducible: "wall" time is a pure
// function of work performed, so two identical runs emit identical logs.
// ---------------------------------------------------------------------------

class Clock {
public:
  virtual ~Clock() = default;
  virtual double now_seconds() const = 0;
  /// Work-based clocks advance with env steps; real clocks ignore this.
  virtual void advance(std::int64_t /*steps*/) {}
};

class SteadyClock final : public Clock {
public:
  SteadyClock() : start_(std::chrono::steady_clock::now()) {}
  double now_seconds() const override {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_;
};

/// Virtual clock advanced by env-step counts. One env step = `rate` seconds.
class StepClock final : public Clock {
public:
  explicit StepClock(double seconds_per_step = 1e-4) : rate_(seconds_per_step) {}
  double now_seconds() const override {
    return static_cast<double>(steps_.load(std::memory_order_relaxed)) * rate_;
  }
  void advance(std::int64_t steps) override { steps_.fetch_add(steps, std::memory_order_relaxed); }

private:
  std::atomic<std::int64_t> steps_{0};
  double rate_;
};

inline bool all_finite(const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) return false;
  }
  return true;
}

}  // namespace podracer
