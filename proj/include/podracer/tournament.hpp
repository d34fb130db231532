#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "podracer/artifact.hpp"
#include "podracer/common.hpp"
#include "podracer/pod.hpp"

namespace podracer {

// ---------------------------------------------------------------------------
// Leaderboard: capacity-bounded, score-sorted store of agent artifacts.
// ---------------------------------------------------------------------------

struct LeaderboardEntry {
  AgentArtifact artifact;
  double score = 0.0;  // equals eval_record.mean
  EvaluationRecord eval_record;
  double inserted_at = 0.0;  // run-clock seconds
  std::int64_t pod_id = -1;
  std::uint64_t seq = 0;  // arrival order; assigned by the leaderboard
};

struct PopulationStats {
  std::vector<double> mean;      // per-coordinate over entry parameters
  std::vector<double> variance;  // population variance, same layout
};

class Leaderboard {
public:
  explicit Leaderboard(std::size_t capacity = 10) : capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("Leaderboard: capacity must be > 0");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<LeaderboardEntry>& entries() const { return entries_; }
  const LeaderboardEntry& at(std::size_t rank) const { return entries_.at(rank); }
  const PopulationStats& stats() const { return stats_; }

  double min_score() const { return entries_.back().score; }
  double best_score() const { return entries_.front().score; }

  std::uint64_t next_seq() { return seq_counter_++; }

  std::vector<LeaderboardEntry>& mutable_entries() { return entries_; }

  /// Per-coordinate mean/variance over the flattened parameters of all
  /// entries; recomputed after every change.
  void refresh_stats() {
    stats_.mean.clear();
    stats_.variance.clear();
    if (entries_.empty()) return;
    const std::size_t n_params = entries_.front().artifact.param_count();
    stats_.mean.assign(n_params, 0.0);
    stats_.variance.assign(n_params, 0.0);
    for (const auto& e : entries_) {
      const std::vector<double> flat = e.artifact.flatten_params();
      for (std::size_t i = 0; i < n_params; ++i) stats_.mean[i] += flat[i];
    }
    const double inv = 1.0 / static_cast<double>(entries_.size());
    for (double& m : stats_.mean) m *= inv;
    for (const auto& e : entries_) {
      const std::vector<double> flat = e.artifact.flatten_params();
      for (std::size_t i = 0; i < n_params; ++i) {
        const double d = flat[i] - stats_.mean[i];
        stats_.variance[i] += d * d;
      }
    }
    for (double& v : stats_.variance) v *= inv;
  }

private:
  std::size_t capacity_;
  std::vector<LeaderboardEntry> entries_;  // sorted by (score desc, seq asc)
  PopulationStats stats_;
  std::uint64_t seq_counter_ = 0;
};

struct LeaderboardUpdate {
  bool inserted = false;
  std::optional<std::size_t> rank;
};

/// Rank-inserts a candidate. A full board rejects scores not strictly above
/// its minimum; on insertion at capacity the lowest entry is evicted. Ties
/// rank the earlier-inserted entry higher.
inline LeaderboardUpdate leaderboard_update(Leaderboard& board, LeaderboardEntry candidate) {
  if (!std::isfinite(candidate.score)) {
    throw NumericError("leaderboard_update: candidate score is not finite");
  }
  candidate.seq = board.next_seq();
  auto& entries = board.mutable_entries();
  if (entries.size() >= board.capacity() && candidate.score <= entries.back().score) {
    return {};
  }
  std::size_t pos = 0;
  while (pos < entries.size() && entries[pos].score >= candidate.score) ++pos;
  entries.insert(entries.begin() + pos, std::move(candidate));
  if (entries.size() > board.capacity()) entries.pop_back();
  board.refresh_stats();
  return LeaderboardUpdate{true, pos};
}

// ---------------------------------------------------------------------------
// Generator: seeds a new pod from the leaderboard elites (with mutation) or
// from scratch.
// ---------------------------------------------------------------------------

struct GeneratorConfig {
  std::size_t top_k = 3;
  double mutation_sigma = 0.01;
  double fresh_prob = 0.2;
};

/// Picks uniformly among the top_k entries, copies the artifact, perturbs
/// every parameter with N(0, mutation_sigma^2) noise and resets the optimizer
/// step counter (moments are kept). Falls back to fresh_init when the board
/// is empty or with probability fresh_prob.
inline AgentArtifact generate_pod_init(const Leaderboard& board, const GeneratorConfig& cfg,
                                       std::mt19937_64& rng,
                                       const std::function<AgentArtifact(std::uint64_t)>& fresh_init) {
  if (cfg.top_k < 1) throw ConfigError("generator.top_k must be >= 1");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (board.empty() || u01(rng) < cfg.fresh_prob) {
    AgentArtifact fresh = fresh_init(rng());
    fresh.lineage.parent_pod = -1;
    return fresh;
  }
  const std::size_t pool = std::min(cfg.top_k, board.size());
  std::uniform_int_distribution<std::size_t> pick(0, pool - 1);
  const LeaderboardEntry& parent = board.at(pick(rng));
  AgentArtifact child = parent.artifact;
  child.buffer_snapshot.reset();  // rollouts are on-policy; not inherited
  child.lineage.parent_pod = parent.pod_id;
  child.lineage.mutation_seed = rng();
  if (cfg.mutation_sigma > 0.0) {
    std::mt19937_64 noise_rng(child.lineage.mutation_seed);
    std::normal_distribution<double> noise(0.0, cfg.mutation_sigma);
    std::vector<double> flat = child.flatten_params();
    for (double& w : flat) w += noise(noise_rng);
    child.unflatten_params(flat);
  }
  child.optimizer.t = 0;
  return child;
}

// ---------------------------------------------------------------------------
// Resource monitor: desk-scale stand-in for a cluster scheduler. Slots come
// from a fixed value, a control file holding one integer (re-read every
// poll_interval seconds), or a scripted (time, slots) schedule for replay.
// ---------------------------------------------------------------------------

struct SlotSchedulePoint {
  double at_seconds = 0.0;
  long long slots = 0;
};

class ResourceMonitor {
public:
  explicit ResourceMonitor(std::size_t fixed_slots) : last_slots_(fixed_slots) {}

  ResourceMonitor(std::size_t default_slots, std::string control_file_path,
                  double poll_interval_seconds = 5.0)
      : last_slots_(default_slots),
        control_file_(std::move(control_file_path)),
        poll_interval_(poll_interval_seconds) {}

  explicit ResourceMonitor(std::vector<SlotSchedulePoint> schedule)
      : schedule_(std::move(schedule)) {
    std::sort(schedule_.begin(), schedule_.end(),
              [](const auto& a, const auto& b) { return a.at_seconds < b.at_seconds; });
    if (schedule_.empty()) throw ConfigError("ResourceMonitor: empty slot schedule");
  }

  using WarnFn = std::function<void(const std::string&)>;
  void set_warn(WarnFn fn) { warn_ = std::move(fn); }

  std::size_t poll(double now_seconds) {
    if (!schedule_.empty()) {
      long long slots = schedule_.front().slots;
      for (const auto& p : schedule_) {
        if (p.at_seconds <= now_seconds) slots = p.slots;
        else break;
      }
      return clamp_slots(slots);
    }
    if (!control_file_.empty() &&
        (last_poll_ < 0.0 || now_seconds - last_poll_ >= poll_interval_)) {
      last_poll_ = now_seconds;
      std::ifstream in(control_file_);
      if (in) {
        long long v = 0;
        if (in >> v) {
          last_slots_ = clamp_slots(v);
        } else {
          warn("malformed slot control file '" + control_file_ + "', keeping " +
               std::to_string(last_slots_));
        }
      }
      // Absent file: keep the configured value silently.
    }
    return last_slots_;
  }

  /// Parses a schedule file with one `<seconds> <slots>` pair per line
  /// (blank lines and #-comments ignored).
  static std::vector<SlotSchedulePoint> parse_schedule_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open slot schedule '" + path + "'");
    std::vector<SlotSchedulePoint> schedule;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      SlotSchedulePoint p;
      if (std::sscanf(line.c_str(), "%lf %lld", &p.at_seconds, &p.slots) != 2) {
        throw FormatError("slot schedule '" + path + "' line " + std::to_string(line_no) +
                          ": expected '<seconds> <slots>'");
      }
      schedule.push_back(p);
    }
    if (schedule.empty()) throw FormatError("slot schedule '" + path + "' has no entries");
    return schedule;
  }

private:
  std::size_t clamp_slots(long long v) {
    if (v < 0) {
      warn("negative slot count " + std::to_string(v) + " clamped to 0");
      return 0;
    }
    return static_cast<std::size_t>(v);
  }

  void warn(const std::string& msg) {
    if (warn_) warn_(msg);
    else std::fprintf(stderr, "[resource_monitor] warning: %s\n", msg.c_str());
  }

  std::size_t last_slots_ = 0;
  std::string control_file_;
  double poll_interval_ = 5.0;
  double last_poll_ = -1.0;
  std::vector<SlotSchedulePoint> schedule_;
  WarnFn warn_;
};

// ---------------------------------------------------------------------------
// Event log: append-only `wall_seconds,event,pod_id,detail` lines, retained
// in memory for inspection and optionally streamed to a file.
// ---------------------------------------------------------------------------

struct Event {
  double wall_seconds = 0.0;
  std::string event;
  std::int64_t pod_id = -1;
  std::string detail;
};

class EventLog {
public:
  explicit EventLog(const std::string& path = "") {
    if (!path.empty()) {
      out_.open(path, std::ios::trunc);
      out_ << "wall_seconds,event,pod_id,detail\n";
      out_.flush();
    }
  }

  void append(double wall_seconds, const std::string& event, std::int64_t pod_id,
              const std::string& detail) {
    std::lock_guard<std::mutex> lock(mutex_);
    events_.push_back(Event{wall_seconds, event, pod_id, detail});
    if (out_.is_open()) {
      char head[64];
      std::snprintf(head, sizeof(head), "%.6f,", wall_seconds);
      out_ << head << event << ',' << pod_id << ',' << detail << '\n';
      out_.flush();
    }
  }

  std::vector<Event> events() {
    std::lock_guard<std::mutex> lock(mutex_);
    return events_;
  }

private:
  std::mutex mutex_;
  std::vector<Event> events_;
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Orchestrator.
// ---------------------------------------------------------------------------

struct PoolConfig {
  std::size_t max_pods = 2;
  std::size_t total_slots = 2;
  std::size_t pods_spawned_limit = 4;
  std::optional<double> target_reward;
  GeneratorConfig generator;
  std::size_t leaderboard_capacity = 10;
  double slot_poll_interval = 5.0;

  void validate() const {
    if (max_pods == 0) throw ConfigError("pool.max_pods must be > 0");
    if (max_pods > total_slots) throw ConfigError("pool.max_pods exceeds pool.total_slots");
    if (pods_spawned_limit == 0) throw ConfigError("pool.pods_spawned_limit must be > 0");
    if (generator.top_k < 1) throw ConfigError("pool.generator.top_k must be >= 1");
  }
};

struct PodSummary {
  std::int64_t pod_id = -1;
  std::int64_t parent_pod = -1;
  std::uint64_t mutation_seed = 0;
  std::string stop_reason;
  double best_score = 0.0;
  std::int64_t env_steps = 0;
  bool crashed = false;
  std::string error;
};

struct RunSummary {
  std::vector<PodSummary> pods;        // ordered by pod id
  std::vector<LeaderboardEntry> final_leaderboard;
  PopulationStats final_stats;
  std::string termination_reason;      // "target_reward" or "budget_exhausted"
  std::size_t pods_spawned = 0;
  std::int64_t total_env_steps = 0;
};

struct OrchestratorHooks {
  /// Called inside the control loop once per pod completion, after the
  /// leaderboard transaction. Useful for tests.
  std::function<void(const RunSummary&)> on_pod_complete;
};

/// Runs the tournament: keeps min(max_pods, polled slots, remaining budget)
/// pods training concurrently, submits each completed pod's best artifact to
/// the leaderboard, and seeds replacements from the board via the generator.
/// Terminates when a leaderboard score reaches target_reward or the spawn
/// budget is exhausted. A pod crash is logged, its slot reclaimed, and the
/// run continues. The leaderboard is only touched from this control thread;
/// generator and updater transactions are therefore serialized by
/// construction.
inline RunSummary orchestrate(const PoolConfig& pool, const PodConfig& pod_cfg, const PpoConfig& ppo,
                              const EnvFactory& env_factory,
                              const std::function<AgentArtifact(std::uint64_t)>& fresh_init,
                              ResourceMonitor& monitor, Clock& clock, EventLog& log,
                              std::uint64_t run_seed, const std::string& curve_dir = "",
                              std::atomic<bool>* external_cancel = nullptr,
                              const OrchestratorHooks& hooks = {}) {
  pool.validate();
  pod_cfg.validate(ppo);

  Leaderboard board(pool.leaderboard_capacity);
  std::mt19937_64 pool_rng(derive_seed(run_seed, seed_tag::kPool));

  struct Completion {
    std::int64_t pod_id;
    PodResult result;
    bool crashed = false;
    std::string error;
  };
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<Completion> completions;

  std::map<std::int64_t, std::thread> running;
  std::atomic<bool> cancel{false};
  std::size_t spawned = 0;
  std::int64_t next_pod_id = 0;

  RunSummary summary;
  summary.termination_reason = "budget_exhausted";
  std::map<std::int64_t, PodSummary> pod_summaries;

  // `decision_now` is the clock reading used for the slot poll; logging the
  // same instant keeps the event log consistent with the schedule even while
  // pods advance a work-based clock concurrently.
  auto spawn_pod = [&](std::size_t slots_now, double decision_now) {
    const std::int64_t id = next_pod_id++;
    AgentArtifact init = generate_pod_init(board, pool.generator, pool_rng, fresh_init);
    PodSummary ps;
    ps.pod_id = id;
    ps.parent_pod = init.lineage.parent_pod;
    ps.mutation_seed = init.lineage.mutation_seed;
    pod_summaries[id] = ps;
    spawned += 1;

    PodContext ctx;
    ctx.seed = derive_seed(run_seed, seed_tag::kPool, static_cast<std::uint64_t>(id));
    ctx.pod_id = id;
    ctx.clock = &clock;
    ctx.cancel = &cancel;
    if (!curve_dir.empty()) ctx.curve_csv_path = curve_dir + "/pod_" + std::to_string(id) + "_curve.csv";

    std::thread t([&, id, init = std::move(init), ctx]() {
      Completion c;
      c.pod_id = id;
      try {
        c.result = pod_train(pod_cfg, ppo, init, env_factory, ctx);
      } catch (const std::exception& e) {
        c.crashed = true;
        c.error = e.what();
      }
      std::lock_guard<std::mutex> lock(mutex);
      completions.push_back(std::move(c));
      cv.notify_one();
    });
    running.emplace(id, std::move(t));
    log.append(decision_now, "spawn", id,
               "parent=" + std::to_string(pod_summaries[id].parent_pod) +
                   ";slots=" + std::to_string(slots_now) +
                   ";running=" + std::to_string(running.size()));
  };

  bool terminate = false;
  while (true) {
    if (external_cancel && external_cancel->load(std::memory_order_relaxed) && !terminate) {
      terminate = true;
      summary.termination_reason = "interrupted";
      cancel.store(true, std::memory_order_relaxed);
      log.append(clock.now_seconds(), "terminate", -1, "reason=interrupted");
    }

    // Spawn while there is budget and room. Slots are polled at the same
    // instant used for the event timestamp, so the log is self-consistent.
    if (!terminate) {
      while (spawned < pool.pods_spawned_limit) {
        const double now = clock.now_seconds();
        const std::size_t slots = monitor.poll(now);
        const std::size_t cap = std::min(pool.max_pods, slots);
        if (running.size() >= cap) break;
        spawn_pod(slots, now);
      }
    }

    if (running.empty() && (terminate || spawned >= pool.pods_spawned_limit)) break;
    if (running.empty() && completions.empty()) {
      // Budget remains but the slot cap is zero; wait for slots to reappear.
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      continue;
    }

    Completion done;
    {
      std::unique_lock<std::mutex> lock(mutex);
      if (!cv.wait_for(lock, std::chrono::milliseconds(50), [&] { return !completions.empty(); })) {
        continue;  // timeout: re-poll slots / cancellation
      }
      done = std::move(completions.front());
      completions.pop_front();
    }

    auto it = running.find(done.pod_id);
    if (it != running.end()) {
      it->second.join();
      running.erase(it);
    }

    PodSummary& ps = pod_summaries[done.pod_id];
    if (done.crashed) {
      ps.crashed = true;
      ps.error = done.error;
      ps.stop_reason = "crashed";
      log.append(clock.now_seconds(), "complete", done.pod_id, "crashed=" + done.error);
      continue;  // slot reclaimed; the pool keeps going
    }

    ps.stop_reason = done.result.stop_reason;
    ps.best_score = done.result.best_record.mean;
    ps.env_steps = done.result.env_steps;
    summary.total_env_steps += done.result.env_steps;
    log.append(clock.now_seconds(), "complete", done.pod_id,
               "stop=" + done.result.stop_reason + ";score=" + std::to_string(ps.best_score) +
                   ";steps=" + std::to_string(ps.env_steps));

    LeaderboardEntry entry;
    entry.artifact = std::move(done.result.best_artifact);
    entry.eval_record = done.result.best_record;
    entry.score = entry.eval_record.mean;
    entry.inserted_at = clock.now_seconds();
    entry.pod_id = done.pod_id;
    const LeaderboardUpdate upd = leaderboard_update(board, std::move(entry));
    if (upd.inserted) {
      log.append(clock.now_seconds(), "insert", done.pod_id,
                 "rank=" + std::to_string(*upd.rank) + ";score=" + std::to_string(ps.best_score));
    } else {
      log.append(clock.now_seconds(), "reject", done.pod_id,
                 "score=" + std::to_string(ps.best_score));
    }

    if (!terminate && pool.target_reward && !board.empty() &&
        board.best_score() >= *pool.target_reward) {
      terminate = true;
      summary.termination_reason = "target_reward";
      cancel.store(true, std::memory_order_relaxed);
      log.append(clock.now_seconds(), "terminate", done.pod_id,
                 "reason=target_reward;best=" + std::to_string(board.best_score()));
    }

    if (hooks.on_pod_complete) {
      RunSummary snapshot;
      snapshot.final_leaderboard = board.entries();
      snapshot.pods_spawned = spawned;
      hooks.on_pod_complete(snapshot);
    }
  }

  for (auto& [id, t] : running) {
    if (t.joinable()) t.join();
  }

  summary.pods_spawned = spawned;
  for (auto& [id, ps] : pod_summaries) summary.pods.push_back(ps);
  summary.final_leaderboard = board.entries();
  summary.final_stats = board.stats();
  return summary;
}

}  // namespace podracer
