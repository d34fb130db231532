#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "podracer/common.hpp"
#include "podracer/tensor.hpp"

namespace podracer {

struct EnvSpec {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> action_low;
  std::vector<double> action_high;
  std::size_t max_episode_steps = 0;
  double reward_target = 0.0;

  void validate() const {
    if (action_low.size() != action_dim || action_high.size() != action_dim) {
      throw ConfigError("EnvSpec: action bounds length vs action_dim");
    }
    for (std::size_t d = 0; d < action_dim; ++d) {
      if (!(action_low[d] < action_high[d])) {
        throw ConfigError("EnvSpec: action_low must be < action_high elementwise");
      }
    }
  }
};

/// A single stateful sub-environment. Randomness is injected per call so the
/// owner controls the stream; deterministic tasks simply ignore it.
class Environment {
public:
  struct Step {
    std::vector<double> state;
    double reward = 0.0;
    bool done = false;
  };

  virtual ~Environment() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual std::vector<double> reset(std::mt19937_64& rng) = 0;
  virtual Step step(const std::vector<double>& action, std::mt19937_64& rng) = 0;
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

// ---------------------------------------------------------------------------
// PointMass2D: a force-controlled point mass chasing a goal in the unit box.
//
//   state  = (pos_x, pos_y, vel_x, vel_y, goal_x, goal_y)
//   action = force in [-1, 1]^2
//   vel' = 0.9 vel + 0.1 a;  pos' = pos + 0.1 vel'
//   reward = -|pos' - goal| - 0.01 |a|^2, +10 bonus on reaching the goal
//   done when |pos' - goal| < 0.05 or after 200 steps
//
// Reset draws pos ~ U(-b,b)^2 then goal ~ U(-b,b)^2 (in that order) with
// b = 0.4, vel = 0. The box is sized so that a competent policy clears +5
// episodic reward: the travel penalty from the farthest corners stays well
// under the goal bonus.
// ---------------------------------------------------------------------------

constexpr std::size_t kPointMassStateDim = 6;
constexpr std::size_t kPointMassActionDim = 2;
constexpr std::size_t kPointMassStepLimit = 200;
constexpr double kPointMassGoalRadius = 0.05;
constexpr double kPointMassGoalBonus = 10.0;
constexpr double kPointMassInitBox = 0.4;

struct PointMassStep {
  std::vector<double> next_state;
  double reward = 0.0;
  bool done = false;
};

/// Closed-form transition. steps_taken is the count before this step; the
/// step limit fires when it reaches kPointMassStepLimit.
inline PointMassStep pointmass_step(const std::vector<double>& state,
                                    const std::vector<double>& action,
                                    std::size_t steps_taken = 0) {
  if (state.size() != kPointMassStateDim || action.size() != kPointMassActionDim) {
    throw DimensionError("pointmass_step: state " + std::to_string(state.size()) + ", action " +
                         std::to_string(action.size()));
  }
  PointMassStep out;
  out.next_state.resize(kPointMassStateDim);
  double action_sq = 0.0;
  for (std::size_t d = 0; d < 2; ++d) {
    const double vel = 0.9 * state[2 + d] + 0.1 * action[d];
    out.next_state[2 + d] = vel;
    out.next_state[d] = state[d] + 0.1 * vel;
    out.next_state[4 + d] = state[4 + d];
    action_sq += action[d] * action[d];
  }
  const double dx = out.next_state[0] - out.next_state[4];
  const double dy = out.next_state[1] - out.next_state[5];
  const double dist = std::sqrt(dx * dx + dy * dy);
  out.reward = -dist - 0.01 * action_sq;
  const bool reached = dist < kPointMassGoalRadius;
  if (reached) out.reward += kPointMassGoalBonus;
  out.done = reached || (steps_taken + 1 >= kPointMassStepLimit);
  return out;
}

class PointMass2D final : public Environment {
public:
  PointMass2D() {
    spec_.state_dim = kPointMassStateDim;
    spec_.action_dim = kPointMassActionDim;
    spec_.action_low = {-1.0, -1.0};
    spec_.action_high = {1.0, 1.0};
    spec_.max_episode_steps = kPointMassStepLimit;
    spec_.reward_target = 5.0;
  }

  const EnvSpec& spec() const override { return spec_; }

  std::vector<double> reset(std::mt19937_64& rng) override {
    std::uniform_real_distribution<double> box(-kPointMassInitBox, kPointMassInitBox);
    state_.assign(kPointMassStateDim, 0.0);
    state_[0] = box(rng);
    state_[1] = box(rng);
    state_[4] = box(rng);
    state_[5] = box(rng);
    steps_ = 0;
    return state_;
  }

  Step step(const std::vector<double>& action, std::mt19937_64&) override {
    PointMassStep r = pointmass_step(state_, action, steps_);
    ++steps_;
    state_ = r.next_state;
    return Step{r.next_state, r.reward, r.done};
  }

private:
  EnvSpec spec_;
  std::vector<double> state_;
  std::size_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Vectorized environment: N independent sub-environments stepped with a
// batched action matrix, auto-resetting on episode end.
// ---------------------------------------------------------------------------

struct VecStepInfo {
  bool episode_end = false;
  std::vector<double> terminal_state;
  double episode_return = 0.0;
  std::size_t episode_length = 0;
};

struct VecStepResult {
  Tensor2 next_states;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<VecStepInfo> infos;
};

class VectorizedEnvironment {
public:
  VectorizedEnvironment(const EnvFactory& factory, std::size_t num_envs) {
    if (num_envs == 0) throw ConfigError("VectorizedEnvironment: num_envs must be > 0");
    for (std::size_t i = 0; i < num_envs; ++i) envs_.push_back(factory());
    spec_ = envs_.front()->spec();
    spec_.validate();
    states_ = Tensor2(num_envs, spec_.state_dim);
    rngs_.resize(num_envs);
    step_counts_.assign(num_envs, 0);
    episode_returns_.assign(num_envs, 0.0);
  }

  std::size_t num_envs() const { return envs_.size(); }
  const EnvSpec& spec() const { return spec_; }
  const Tensor2& states() const { return states_; }
  const std::vector<std::size_t>& step_counts() const { return step_counts_; }

  /// Reseeds every per-env stream from `seed` and resets all sub-envs.
  Tensor2 reset(std::uint64_t seed) {
    for (std::size_t i = 0; i < envs_.size(); ++i) {
      rngs_[i].seed(derive_seed(seed, seed_tag::kVecEnv, static_cast<std::uint64_t>(i)));
      set_row(i, envs_[i]->reset(rngs_[i]));
      step_counts_[i] = 0;
      episode_returns_[i] = 0.0;
    }
    return states_;
  }

  /// Steps all sub-envs with one batched action matrix. Actions are clipped
  /// to the spec bounds. Rows that finish an episode are auto-reset: the
  /// returned row is the fresh initial state and infos carries the terminal
  /// state plus episode totals.
  VecStepResult step(const Tensor2& actions) {
    if (actions.rows != envs_.size() || actions.cols != spec_.action_dim) {
      throw DimensionError("vec_step: actions " + actions.shape_str() + " vs expected [" +
                           std::to_string(envs_.size()) + "x" + std::to_string(spec_.action_dim) +
                           "]");
    }
    VecStepResult out;
    out.next_states = Tensor2(envs_.size(), spec_.state_dim);
    out.rewards.resize(envs_.size());
    out.dones.resize(envs_.size());
    out.infos.resize(envs_.size());
    std::vector<double> clipped(spec_.action_dim);
    for (std::size_t i = 0; i < envs_.size(); ++i) {
      for (std::size_t d = 0; d < spec_.action_dim; ++d) {
        clipped[d] = std::clamp(actions.at(i, d), spec_.action_low[d], spec_.action_high[d]);
      }
      Environment::Step s = envs_[i]->step(clipped, rngs_[i]);
      step_counts_[i] += 1;
      episode_returns_[i] += s.reward;
      out.rewards[i] = s.reward;
      out.dones[i] = s.done ? 1 : 0;
      if (s.done) {
        out.infos[i].episode_end = true;
        out.infos[i].terminal_state = s.state;
        out.infos[i].episode_return = episode_returns_[i];
        out.infos[i].episode_length = step_counts_[i];
        const std::vector<double> fresh = envs_[i]->reset(rngs_[i]);
        std::copy(fresh.begin(), fresh.end(), out.next_states.row(i));
        step_counts_[i] = 0;
        episode_returns_[i] = 0.0;
      } else {
        std::copy(s.state.begin(), s.state.end(), out.next_states.row(i));
      }
    }
    states_ = out.next_states;
    return out;
  }

private:
  void set_row(std::size_t i, const std::vector<double>& v) {
    std::copy(v.begin(), v.end(), states_.row(i));
  }

  std::vector<std::unique_ptr<Environment>> envs_;
  EnvSpec spec_;
  Tensor2 states_;
  std::vector<std::mt19937_64> rngs_;
  std::vector<std::size_t> step_counts_;
  std::vector<double> episode_returns_;
};

}  // namespace podracer
