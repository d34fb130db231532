#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "podracer/artifact.hpp"
#include "podracer/buffer.hpp"
#include "podracer/common.hpp"
#include "podracer/env.hpp"
#include "podracer/ppo.hpp"

namespace podracer {

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

struct EvaluationRecord {
  double wall_seconds = 0.0;
  std::int64_t env_steps = 0;
  std::vector<double> episodic_rewards;
  double mean = 0.0;
  double std_dev = 0.0;  // population (N-divisor) standard deviation
};

/// Runs `episodes` evaluation episodes on a fresh environment instance.
/// Actions are the policy mean clipped to the action bounds unless
/// sample_actions is set. Episode i uses the rng stream
/// derive_seed(seed, kEpisode, i), so a fixed seed defines a fixed suite.
inline EvaluationRecord evaluate(const GaussianPolicy& actor, const EnvFactory& env_factory,
                                 std::size_t episodes, std::uint64_t seed,
                                 bool sample_actions = false) {
  if (episodes < 1) throw UsageError("evaluate: episodes must be >= 1");
  std::unique_ptr<Environment> env = env_factory();
  const EnvSpec& spec = env->spec();
  EvaluationRecord rec;
  rec.episodic_rewards.reserve(episodes);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    std::mt19937_64 rng(derive_seed(seed, seed_tag::kEpisode, static_cast<std::uint64_t>(ep)));
    std::vector<double> obs = env->reset(rng);
    double total = 0.0;
    bool done = false;
    while (!done) {
      Tensor2 state(1, spec.state_dim);
      std::copy(obs.begin(), obs.end(), state.row(0));
      std::vector<double> action(spec.action_dim);
      if (sample_actions) {
        PolicySample s = policy_sample(actor, state, rng);
        for (std::size_t d = 0; d < spec.action_dim; ++d) action[d] = s.actions.at(0, d);
      } else {
        Tensor2 mean = policy_mean(actor, state);
        for (std::size_t d = 0; d < spec.action_dim; ++d) action[d] = mean.at(0, d);
      }
      for (std::size_t d = 0; d < spec.action_dim; ++d) {
        action[d] = std::clamp(action[d], spec.action_low[d], spec.action_high[d]);
      }
      Environment::Step s = env->step(action, rng);
      total += s.reward;
      done = s.done;
      obs = s.state;
    }
    rec.episodic_rewards.push_back(total);
  }
  const double n = static_cast<double>(episodes);
  for (double r : rec.episodic_rewards) rec.mean += r;
  rec.mean /= n;
  for (double r : rec.episodic_rewards) rec.std_dev += (r - rec.mean) * (r - rec.mean);
  rec.std_dev = std::sqrt(rec.std_dev / n);
  return rec;
}

// ---------------------------------------------------------------------------
// Worker: rollout collection into a pre-assigned buffer segment.
// ---------------------------------------------------------------------------

/// Collects horizon * num_envs transitions into
/// buffer[segment_offset, segment_offset + horizon * num_envs). The segment is
/// laid out env-major: env e owns the contiguous run
/// [segment_offset + e * horizon, +horizon) in time order, registered as chunk
/// chunk_base + e with its critic bootstrap value. Actions are stored
/// unclipped together with their log-probs; the environment clips internally.
inline void worker_collect(const GaussianPolicy& actor, const MlpParams& critic,
                           VectorizedEnvironment& venv, std::size_t horizon,
                           TransitionBuffer& buffer, std::size_t segment_offset,
                           std::size_t chunk_base, std::mt19937_64& rng) {
  const std::size_t num_envs = venv.num_envs();
  const std::size_t state_dim = venv.spec().state_dim;
  const std::size_t action_dim = venv.spec().action_dim;
  if (segment_offset + horizon * num_envs > buffer.capacity()) {
    throw UsageError("worker_collect: segment [" + std::to_string(segment_offset) + ", " +
                     std::to_string(segment_offset + horizon * num_envs) + ") overflows capacity " +
                     std::to_string(buffer.capacity()));
  }
  Transition tr;
  tr.state.resize(state_dim);
  tr.action.resize(action_dim);
  for (std::size_t t = 0; t < horizon; ++t) {
    const Tensor2 states = venv.states();
    PolicySample sample = policy_sample(actor, states, rng);
    Tensor2 values = mlp_forward(critic, states);
    VecStepResult step = venv.step(sample.actions);
    for (std::size_t e = 0; e < num_envs; ++e) {
      std::copy(states.row(e), states.row(e) + state_dim, tr.state.begin());
      std::copy(sample.actions.row(e), sample.actions.row(e) + action_dim, tr.action.begin());
      tr.log_prob = sample.log_probs[e];
      tr.reward = step.rewards[e];
      tr.done = step.dones[e] != 0;
      tr.value = values.at(e, 0);
      buffer.put(segment_offset + e * horizon + t, tr);
    }
  }
  // Bootstrap with V of the state each env is left in (a fresh reset state
  // when the last transition terminated; GAE ignores it in that case).
  Tensor2 final_values = mlp_forward(critic, venv.states());
  for (std::size_t e = 0; e < num_envs; ++e) {
    buffer.set_chunk(chunk_base + e, TransitionBuffer::Chunk{segment_offset + e * horizon, horizon,
                                                             final_values.at(e, 0)});
  }
}

// ---------------------------------------------------------------------------
// Parameter fusion.
// ---------------------------------------------------------------------------

/// Elementwise arithmetic mean of all parameters (actor, log_std, critic) and
/// optimizer moments; the optimizer step counter becomes the max. Metadata
/// (lineage, tag, buffer snapshot) is taken from the first artifact.
inline AgentArtifact fuse_parameters(const std::vector<AgentArtifact>& artifacts) {
  if (artifacts.empty()) throw UsageError("fuse_parameters: empty artifact list");
  if (artifacts.size() == 1) return artifacts.front();
  const std::size_t n_params = artifacts.front().param_count();
  for (const auto& a : artifacts) {
    if (!a.shape_compatible(artifacts.front())) {
      throw UsageError("fuse_parameters: artifacts have incompatible shapes");
    }
  }
  const double inv = 1.0 / static_cast<double>(artifacts.size());
  std::vector<double> mean_params(n_params, 0.0);
  AgentArtifact fused = artifacts.front();
  std::fill(fused.optimizer.m.begin(), fused.optimizer.m.end(), 0.0);
  std::fill(fused.optimizer.v.begin(), fused.optimizer.v.end(), 0.0);
  fused.optimizer.t = 0;
  for (const auto& a : artifacts) {
    const std::vector<double> flat = a.flatten_params();
    for (std::size_t i = 0; i < n_params; ++i) mean_params[i] += flat[i];
    for (std::size_t i = 0; i < n_params; ++i) {
      fused.optimizer.m[i] += a.optimizer.m[i];
      fused.optimizer.v[i] += a.optimizer.v[i];
    }
    fused.optimizer.t = std::max(fused.optimizer.t, a.optimizer.t);
  }
  for (std::size_t i = 0; i < n_params; ++i) {
    mean_params[i] *= inv;
    fused.optimizer.m[i] *= inv;
    fused.optimizer.v[i] *= inv;
  }
  fused.unflatten_params(mean_params);
  return fused;
}

// ---------------------------------------------------------------------------
// Pod training loop.
// ---------------------------------------------------------------------------

struct StopConfig {
  std::int64_t max_steps = 0;    // 0 = unlimited
  double max_seconds = 0.0;      // 0 = unlimited
  std::optional<double> target_reward;
};

struct PodConfig {
  std::size_t num_workers = 2;
  std::size_t envs_per_worker = 32;
  std::size_t num_learners = 2;
  std::size_t rollout_horizon = 64;
  std::size_t eval_episodes = 10;
  std::int64_t eval_interval_steps = 4096;
  std::uint64_t eval_seed = 1777;  // shared across pods: comparable scores
  bool sampled_eval = false;
  bool async_eval = true;
  StopConfig stop;

  void validate(const PpoConfig& ppo) const {
    if (num_workers == 0 || envs_per_worker == 0 || num_learners == 0 || rollout_horizon == 0) {
      throw ConfigError("pod: worker/env/learner/horizon counts must be > 0");
    }
    const std::size_t produced = num_workers * envs_per_worker * rollout_horizon;
    if (produced != ppo.buffer_size) {
      throw ConfigError("pod.num_workers * pod.envs_per_worker * pod.rollout_horizon = " +
                        std::to_string(produced) + " must equal ppo.buffer_size = " +
                        std::to_string(ppo.buffer_size));
    }
    if (eval_episodes < 1) throw ConfigError("pod.eval_episodes must be >= 1");
  }
};

struct PodResult {
  AgentArtifact final_artifact;
  AgentArtifact best_artifact;
  EvaluationRecord best_record;
  std::vector<EvaluationRecord> history;
  std::string stop_reason;
  std::int64_t env_steps = 0;
};

struct PodContext {
  std::uint64_t seed = 0;
  std::int64_t pod_id = 0;
  Clock* clock = nullptr;               // defaults to a local SteadyClock
  std::atomic<bool>* cancel = nullptr;  // cooperative cancellation
  std::string curve_csv_path;           // empty = no curve streaming
};

namespace detail {

/// Serializes evaluation snapshots: jobs are processed in submission order
/// (on a background thread when async), history and best-tracking are
/// mutex-guarded, and each record is flushed to the curve CSV as it lands.
class PodEvaluator {
public:
  PodEvaluator(const PodConfig& cfg, const EnvFactory& factory, const std::string& csv_path)
      : cfg_(cfg), factory_(factory) {
    if (!csv_path.empty()) {
      csv_.open(csv_path, std::ios::trunc);
      csv_ << "wall_seconds,env_steps,reward_mean,reward_std\n";
      csv_.flush();
    }
    if (cfg_.async_eval) worker_ = std::thread([this] { run(); });
  }

  ~PodEvaluator() { finish(); }

  void submit(const AgentArtifact& snapshot, std::int64_t env_steps, double wall_seconds) {
    if (cfg_.async_eval) {
      std::lock_guard<std::mutex> lock(queue_mutex_);
      queue_.push_back(Job{snapshot, env_steps, wall_seconds});
      queue_cv_.notify_one();
    } else {
      process(Job{snapshot, env_steps, wall_seconds});
    }
  }

  /// Blocks until all submitted jobs are scored, then stops the worker.
  void finish() {
    if (cfg_.async_eval && worker_.joinable()) {
      {
        std::lock_guard<std::mutex> lock(queue_mutex_);
        done_ = true;
        queue_cv_.notify_one();
      }
      worker_.join();
    }
  }

  std::vector<EvaluationRecord> history() {
    std::lock_guard<std::mutex> lock(state_mutex_);
    return history_;
  }

  bool has_best() {
    std::lock_guard<std::mutex> lock(state_mutex_);
    return best_.has_value();
  }

  std::pair<AgentArtifact, EvaluationRecord> best() {
    std::lock_guard<std::mutex> lock(state_mutex_);
    if (!best_) throw UsageError("PodEvaluator: no evaluation has completed");
    return {best_->first, best_->second};
  }

  double best_mean() {
    std::lock_guard<std::mutex> lock(state_mutex_);
    return best_ ? best_->second.mean : -std::numeric_limits<double>::infinity();
  }

private:
  struct Job {
    AgentArtifact snapshot;
    std::int64_t env_steps;
    double wall_seconds;
  };

  void run() {
    while (true) {
      Job job;
      {
        std::unique_lock<std::mutex> lock(queue_mutex_);
        queue_cv_.wait(lock, [this] { return done_ || !queue_.empty(); });
        if (queue_.empty()) {
          if (done_) return;
          continue;
        }
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      process(job);
    }
  }

  void process(const Job& job) {
    EvaluationRecord rec =
        evaluate(job.snapshot.actor, factory_, cfg_.eval_episodes, cfg_.eval_seed, cfg_.sampled_eval);
    rec.env_steps = job.env_steps;
    rec.wall_seconds = job.wall_seconds;
    std::lock_guard<std::mutex> lock(state_mutex_);
    history_.push_back(rec);
    if (!best_ || rec.mean > best_->second.mean) best_.emplace(job.snapshot, rec);
    if (csv_.is_open()) {
      char line[128];
      std::snprintf(line, sizeof(line), "%.6f,%lld,%.10g,%.10g\n", rec.wall_seconds,
                    static_cast<long long>(rec.env_steps), rec.mean, rec.std_dev);
      csv_ << line;
      csv_.flush();
    }
  }

  PodConfig cfg_;
  EnvFactory factory_;
  std::ofstream csv_;
  std::thread worker_;
  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<Job> queue_;
  bool done_ = false;
  std::mutex state_mutex_;
  std::vector<EvaluationRecord> history_;
  std::optional<std::pair<AgentArtifact, EvaluationRecord>> best_;
};

}  // namespace detail

/// Trains one agent: workers fill a shared contiguous buffer in parallel,
/// learners run independent PPO updates on the read-only buffer and are fused
/// by parameter averaging at each epoch boundary, and the evaluator scores
/// snapshots without blocking the loop. Returns the final artifact, the
/// best-scoring snapshot, and the evaluation history.
///
/// Evaluation episodes do not count against stop.max_steps and do not advance
/// a work-based clock; budgets are in training transitions.
inline PodResult pod_train(const PodConfig& cfg, const PpoConfig& ppo, const AgentArtifact& init,
                           const EnvFactory& env_factory, const PodContext& ctx = {}) {
  cfg.validate(ppo);
  ppo.validate();

  SteadyClock local_clock;
  Clock* clock = ctx.clock ? ctx.clock : &local_clock;
  const double start_seconds = clock->now_seconds();

  std::vector<std::unique_ptr<VectorizedEnvironment>> venvs;
  try {
    for (std::size_t w = 0; w < cfg.num_workers; ++w) {
      venvs.push_back(std::make_unique<VectorizedEnvironment>(env_factory, cfg.envs_per_worker));
      venvs[w]->reset(derive_seed(ctx.seed, seed_tag::kVecEnv, static_cast<std::uint64_t>(w)));
    }
  } catch (const std::exception& e) {
    throw UsageError("pod " + std::to_string(ctx.pod_id) + ": environment construction failed: " +
                     e.what());
  }
  const EnvSpec spec = venvs.front()->spec();

  AgentArtifact artifact = init;
  TransitionBuffer buffer(ppo.buffer_size, spec.state_dim, spec.action_dim);
  detail::PodEvaluator evaluator(cfg, env_factory, ctx.curve_csv_path);

  std::int64_t total_steps = 0;
  std::int64_t last_eval_steps = -1;
  std::uint64_t epoch = 0;
  std::string stop_reason;

  // Baseline score of the incoming artifact (generation 0 of this pod).
  evaluator.submit(artifact, 0, clock->now_seconds() - start_seconds);
  last_eval_steps = 0;

  const std::size_t seg_len = cfg.envs_per_worker * cfg.rollout_horizon;

  while (true) {
    if (ctx.cancel && ctx.cancel->load(std::memory_order_relaxed)) {
      stop_reason = "cancelled";
      break;
    }
    if (cfg.stop.max_steps > 0 && total_steps >= cfg.stop.max_steps) {
      stop_reason = "max_steps";
      break;
    }
    if (cfg.stop.max_seconds > 0.0 &&
        clock->now_seconds() - start_seconds >= cfg.stop.max_seconds) {
      stop_reason = "max_seconds";
      break;
    }
    if (cfg.stop.target_reward && evaluator.best_mean() >= *cfg.stop.target_reward) {
      stop_reason = "target_reward";
      break;
    }

    // Collect phase: workers write disjoint pre-committed segments.
    buffer.clear();
    buffer.resize_chunks(cfg.num_workers * cfg.envs_per_worker);
    for (std::size_t w = 0; w < cfg.num_workers; ++w) buffer.commit_segment(w * seg_len, seg_len);
    {
      std::vector<std::thread> threads;
      std::vector<std::exception_ptr> errors(cfg.num_workers);
      auto work = [&](std::size_t w) {
        try {
          std::mt19937_64 rng(derive_seed(ctx.seed, seed_tag::kCollect, w, epoch));
          worker_collect(artifact.actor, artifact.critic, *venvs[w], cfg.rollout_horizon, buffer,
                         w * seg_len, w * cfg.envs_per_worker, rng);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      };
      if (cfg.num_workers == 1) {
        work(0);
      } else {
        for (std::size_t w = 0; w < cfg.num_workers; ++w) threads.emplace_back(work, w);
        for (auto& t : threads) t.join();
      }
      for (auto& err : errors) {
        if (err) std::rethrow_exception(err);
      }
    }
    total_steps += static_cast<std::int64_t>(ppo.buffer_size);
    clock->advance(static_cast<std::int64_t>(ppo.buffer_size));

    // Learn phase: independent updates on the shared read-only buffer, then
    // parameter fusion. The only cross-learner communication is the fusion.
    {
      std::vector<AgentArtifact> results(cfg.num_learners);
      std::vector<std::exception_ptr> errors(cfg.num_learners);
      auto learn = [&](std::size_t l) {
        try {
          results[l] =
              ppo_update(artifact, buffer, ppo, derive_seed(ctx.seed, seed_tag::kLearner, l, epoch))
                  .artifact;
        } catch (...) {
          errors[l] = std::current_exception();
        }
      };
      if (cfg.num_learners == 1) {
        learn(0);
      } else {
        std::vector<std::thread> threads;
        for (std::size_t l = 0; l < cfg.num_learners; ++l) threads.emplace_back(learn, l);
        for (auto& t : threads) t.join();
      }
      for (auto& err : errors) {
        if (err) std::rethrow_exception(err);
      }
      artifact = fuse_parameters(results);
    }
    epoch += 1;

    if (total_steps - last_eval_steps >= cfg.eval_interval_steps) {
      evaluator.submit(artifact, total_steps, clock->now_seconds() - start_seconds);
      last_eval_steps = total_steps;
    }
  }

  if (last_eval_steps != total_steps) {
    evaluator.submit(artifact, total_steps, clock->now_seconds() - start_seconds);
  }
  evaluator.finish();

  PodResult result;
  result.final_artifact = artifact;
  result.history = evaluator.history();
  auto [best_artifact, best_record] = evaluator.best();
  result.best_artifact = std::move(best_artifact);
  result.best_record = std::move(best_record);
  result.stop_reason = stop_reason;
  result.env_steps = total_steps;
  return result;
}

}  // namespace podracer
