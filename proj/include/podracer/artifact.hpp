#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "podracer/buffer.hpp"
#include "podracer/nn.hpp"

namespace podracer {

/// Where an artifact came from: a fresh initialization (parent_pod = -1) or a
/// mutated copy of a leaderboard entry.
struct Lineage {
  std::int64_t parent_pod = -1;
  std::uint64_t mutation_seed = 0;
};

/// The complete training state of one agent: actor, critic, optimizer, an
/// optional rollout-buffer snapshot, and provenance. Plain value type; copies
/// are deep and independent.
struct AgentArtifact {
  GaussianPolicy actor;
  MlpParams critic;
  AdamState optimizer;
  std::optional<TransitionBuffer> buffer_snapshot;
  Lineage lineage;
  std::string algo_tag = "ppo";

  std::size_t param_count() const {
    return actor.mean_net.param_count() + actor.log_std.size() + critic.param_count();
  }

  /// Canonical flat layout: actor layers (weight then bias, in order),
  /// actor log_std, critic layers (weight then bias). Fusion, mutation,
  /// Adam and checkpoints all rely on this ordering.
  std::vector<double> flatten_params() const {
    std::vector<double> out;
    out.reserve(param_count());
    for (const auto& l : actor.mean_net.layers) {
      out.insert(out.end(), l.weight.data.begin(), l.weight.data.end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    out.insert(out.end(), actor.log_std.begin(), actor.log_std.end());
    for (const auto& l : critic.layers) {
      out.insert(out.end(), l.weight.data.begin(), l.weight.data.end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
  }

  void unflatten_params(const std::vector<double>& flat) {
    if (flat.size() != param_count()) {
      throw DimensionError("unflatten_params: " + std::to_string(flat.size()) + " values vs " +
                           std::to_string(param_count()) + " params");
    }
    std::size_t pos = 0;
    auto take = [&](double* dst, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) dst[i] = flat[pos + i];
      pos += n;
    };
    for (auto& l : actor.mean_net.layers) {
      take(l.weight.data.data(), l.weight.data.size());
      take(l.bias.data(), l.bias.size());
    }
    take(actor.log_std.data(), actor.log_std.size());
    for (auto& l : critic.layers) {
      take(l.weight.data.data(), l.weight.data.size());
      take(l.bias.data(), l.bias.size());
    }
  }

  bool shape_compatible(const AgentArtifact& o) const {
    if (actor.mean_net.layers.size() != o.actor.mean_net.layers.size()) return false;
    if (critic.layers.size() != o.critic.layers.size()) return false;
    if (actor.log_std.size() != o.actor.log_std.size()) return false;
    for (std::size_t i = 0; i < critic.layers.size(); ++i) {
      if (!critic.layers[i].weight.same_shape(o.critic.layers[i].weight)) return false;
    }
    for (std::size_t i = 0; i < actor.mean_net.layers.size(); ++i) {
      if (!actor.mean_net.layers[i].weight.same_shape(o.actor.mean_net.layers[i].weight)) return false;
    }
    return true;
  }
};

/// Fresh artifact for a (state_dim, action_dim) task. Hidden sizes default to
/// two 64-unit tanh layers; the optimizer covers actor and critic jointly
/// over the canonical flat layout.
inline AgentArtifact artifact_init(std::size_t state_dim, std::size_t action_dim,
                                   std::uint64_t seed, double learning_rate,
                                   const std::vector<std::size_t>& hidden = {64, 64}) {
  AgentArtifact a;
  a.actor = policy_init(state_dim, action_dim, hidden, derive_seed(seed, seed_tag::kInit, 1));
  std::vector<std::size_t> critic_dims;
  critic_dims.push_back(state_dim);
  critic_dims.insert(critic_dims.end(), hidden.begin(), hidden.end());
  critic_dims.push_back(1);
  a.critic = mlp_init(critic_dims, derive_seed(seed, seed_tag::kInit, 2));
  a.optimizer = adam_init(a.param_count(), learning_rate);
  a.lineage.parent_pod = -1;
  a.lineage.mutation_seed = seed;
  return a;
}

}  // namespace podracer
