#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

#include "podracer/common.hpp"

namespace podracer {

/// One environment transition in row form. Storage is columnar (see
/// TransitionBuffer); this struct is the unit tests and workers trade in.
struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double log_prob = 0.0;
  double reward = 0.0;
  bool done = false;
  double value = 0.0;
};

/// Columnar rollout storage. Each field lives in one contiguous allocation
/// sized at construction; workers write disjoint index ranges, learners read
/// the whole thing. `chunks` records the per-env contiguous runs (with their
/// bootstrap values) that advantage estimation consumes.
class TransitionBuffer {
public:
  /// A contiguous run of transitions from one sub-environment, in time order.
  /// bootstrap_value is V(state after the last transition); it is ignored by
  /// GAE when that transition ended an episode.
  struct Chunk {
    std::size_t offset = 0;
    std::size_t length = 0;
    double bootstrap_value = 0.0;
  };

  TransitionBuffer() = default;
  TransitionBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim)
      : capacity_(capacity),
        state_dim_(state_dim),
        action_dim_(action_dim),
        states_(capacity * state_dim),
        actions_(capacity * action_dim),
        log_probs_(capacity),
        rewards_(capacity),
        dones_(capacity, 0),
        values_(capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t length() const { return length_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  bool full() const { return length_ == capacity_; }

  const std::vector<double>& states() const { return states_; }
  const std::vector<double>& actions() const { return actions_; }
  const std::vector<double>& log_probs() const { return log_probs_; }
  const std::vector<double>& rewards() const { return rewards_; }
  const std::vector<std::uint8_t>& dones() const { return dones_; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<Chunk>& chunks() const { return chunks_; }

  const double* state_row(std::size_t i) const { return states_.data() + i * state_dim_; }
  const double* action_row(std::size_t i) const { return actions_.data() + i * action_dim_; }

  /// Writes one transition at an absolute index inside a reserved segment.
  void put(std::size_t index, const Transition& t) {
    if (index >= capacity_) {
      throw UsageError("TransitionBuffer::put: index " + std::to_string(index) +
                       " past capacity " + std::to_string(capacity_));
    }
    if (t.state.size() != state_dim_ || t.action.size() != action_dim_) {
      throw DimensionError("TransitionBuffer::put: transition dims (" +
                           std::to_string(t.state.size()) + "," + std::to_string(t.action.size()) +
                           ") vs buffer (" + std::to_string(state_dim_) + "," +
                           std::to_string(action_dim_) + ")");
    }
    for (std::size_t d = 0; d < state_dim_; ++d) states_[index * state_dim_ + d] = t.state[d];
    for (std::size_t d = 0; d < action_dim_; ++d) actions_[index * action_dim_ + d] = t.action[d];
    log_probs_[index] = t.log_prob;
    rewards_[index] = t.reward;
    dones_[index] = t.done ? 1 : 0;
    values_[index] = t.value;
  }

  Transition get(std::size_t i) const {
    Transition t;
    t.state.assign(state_row(i), state_row(i) + state_dim_);
    t.action.assign(action_row(i), action_row(i) + action_dim_);
    t.log_prob = log_probs_[i];
    t.reward = rewards_[i];
    t.done = dones_[i] != 0;
    t.value = values_[i];
    return t;
  }

  /// Reserves [offset, offset+length) for a writer. Segments may be claimed
  /// in any order; length() becomes the sum of committed segments.
  void commit_segment(std::size_t offset, std::size_t length) {
    if (offset + length > capacity_) {
      throw UsageError("TransitionBuffer: segment [" + std::to_string(offset) + "," +
                       std::to_string(offset + length) + ") overflows capacity " +
                       std::to_string(capacity_));
    }
    length_ += length;
    if (length_ > capacity_) throw UsageError("TransitionBuffer: overlapping segments");
  }

  void add_chunk(std::size_t offset, std::size_t length, double bootstrap_value) {
    chunks_.push_back(Chunk{offset, length, bootstrap_value});
  }

  /// Pre-sizes the chunk table so concurrent writers can fill disjoint slots.
  void resize_chunks(std::size_t n) { chunks_.assign(n, Chunk{}); }
  void set_chunk(std::size_t i, const Chunk& c) { chunks_.at(i) = c; }

  void clear() {
    length_ = 0;
    chunks_.clear();
  }

private:
  std::size_t capacity_ = 0;
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
  std::size_t length_ = 0;
  std::vector<double> states_;
  std::vector<double> actions_;
  std::vector<double> log_probs_;
  std::vector<double> rewards_;
  std::vector<std::uint8_t> dones_;
  std::vector<double> values_;
  std::vector<Chunk> chunks_;
};

}  // namespace podracer
