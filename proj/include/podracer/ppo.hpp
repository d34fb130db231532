#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "podracer/artifact.hpp"
#include "podracer/buffer.hpp"
#include "podracer/common.hpp"
#include "podracer/nn.hpp"

namespace podracer {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  std::size_t epochs_per_update = 4;
  std::size_t minibatch_size = 1024;
  std::size_t buffer_size = 4096;
  double learning_rate = 1e-3;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma must be in (0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("ppo.gae_lambda must be in [0, 1]");
    if (!(clip_eps > 0.0)) throw ConfigError("ppo.clip_eps must be > 0");
    if (minibatch_size > buffer_size) {
      throw ConfigError("ppo.minibatch_size exceeds ppo.buffer_size");
    }
    if (minibatch_size == 0) throw ConfigError("ppo.minibatch_size must be > 0");
  }
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Generalized advantage estimation over one time-ordered trajectory slice.
/// dones[t] marks that the transition at t ended its episode, which cuts the
/// recursion (no bootstrap across the boundary). bootstrap_value is V of the
/// state following the last transition and is only used when that transition
/// did not terminate.
inline GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                             const std::vector<std::uint8_t>& dones, double bootstrap_value,
                             double gamma, double lambda) {
  const std::size_t t_len = rewards.size();
  if (t_len == 0 || values.size() != t_len || dones.size() != t_len) {
    throw DimensionError("compute_gae: rewards " + std::to_string(rewards.size()) + ", values " +
                         std::to_string(values.size()) + ", dones " + std::to_string(dones.size()));
  }
  GaeResult out;
  out.advantages.assign(t_len, 0.0);
  out.returns.assign(t_len, 0.0);
  double gae = 0.0;
  for (std::size_t i = t_len; i-- > 0;) {
    const double next_value = (i + 1 < t_len) ? values[i + 1] : bootstrap_value;
    const double nonterminal = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * nonterminal - values[i];
    gae = delta + gamma * lambda * nonterminal * gae;
    out.advantages[i] = gae;
    out.returns[i] = gae + values[i];
  }
  return out;
}

/// A gathered minibatch. Advantages are expected to be normalized already
/// (ppo_update normalizes once per update over the full buffer).
struct Minibatch {
  Tensor2 states;
  Tensor2 actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;
};

inline Minibatch gather_minibatch(const TransitionBuffer& buffer, const std::vector<double>& advantages,
                                  const std::vector<double>& returns,
                                  const std::size_t* indices, std::size_t count) {
  Minibatch mb;
  mb.states = Tensor2(count, buffer.state_dim());
  mb.actions = Tensor2(count, buffer.action_dim());
  mb.old_log_probs.resize(count);
  mb.advantages.resize(count);
  mb.returns.resize(count);
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t i = indices[r];
    const double* s = buffer.state_row(i);
    std::copy(s, s + buffer.state_dim(), mb.states.row(r));
    const double* a = buffer.action_row(i);
    std::copy(a, a + buffer.action_dim(), mb.actions.row(r));
    mb.old_log_probs[r] = buffer.log_probs()[i];
    mb.advantages[r] = advantages[i];
    mb.returns[r] = returns[i];
  }
  return mb;
}

struct PpoLosses {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

namespace detail {

/// Forward + gradient of the joint PPO objective on one minibatch.
/// total = policy_loss + value_coef * value_loss - entropy_coef * entropy.
/// flat_grads follows AgentArtifact's canonical parameter layout.
inline PpoLosses ppo_loss_grads(const GaussianPolicy& actor, const MlpParams& critic,
                                const Minibatch& mb, const PpoConfig& cfg,
                                std::vector<double>* flat_grads) {
  const std::size_t n = mb.states.rows;
  const std::size_t adim = actor.action_dim();
  const double inv_n = 1.0 / static_cast<double>(n);

  MlpCache actor_cache;
  Tensor2 mean = mlp_forward(actor.mean_net, mb.states, flat_grads ? &actor_cache : nullptr);

  PpoLosses losses;
  Tensor2 dmean(n, adim);                       // dTotal/dmu
  std::vector<double> dlog_std(adim, 0.0);      // dTotal/dlog_std
  for (std::size_t i = 0; i < n; ++i) {
    double lp = 0.0;
    for (std::size_t d = 0; d < adim; ++d) {
      const double sigma = std::exp(actor.log_std[d]);
      const double z = (mb.actions.at(i, d) - mean.at(i, d)) / sigma;
      lp += -0.5 * kLogTwoPi - actor.log_std[d] - 0.5 * z * z;
    }
    const double ratio = std::exp(lp - mb.old_log_probs[i]);
    const double adv = mb.advantages[i];
    const double surr1 = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    const double surr2 = clipped * adv;
    losses.policy_loss += -std::min(surr1, surr2) * inv_n;

    if (flat_grads) {
      // Sub-gradient of -min(surr1, surr2): flows through the unclipped
      // branch when it attains the min (ties included), else vanishes.
      const double dl_dlp = (surr1 <= surr2) ? -adv * ratio * inv_n : 0.0;
      for (std::size_t d = 0; d < adim; ++d) {
        const double sigma = std::exp(actor.log_std[d]);
        const double z = (mb.actions.at(i, d) - mean.at(i, d)) / sigma;
        dmean.at(i, d) = dl_dlp * (z / sigma);
        dlog_std[d] += dl_dlp * (z * z - 1.0);
      }
    }
  }
  losses.entropy = policy_entropy(actor);
  if (flat_grads) {
    for (std::size_t d = 0; d < adim; ++d) dlog_std[d] -= cfg.entropy_coef;
  }

  MlpCache critic_cache;
  Tensor2 value = mlp_forward(critic, mb.states, flat_grads ? &critic_cache : nullptr);
  Tensor2 dvalue(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double err = value.at(i, 0) - mb.returns[i];
    losses.value_loss += err * err * inv_n;
    if (flat_grads) dvalue.at(i, 0) = cfg.value_coef * 2.0 * err * inv_n;
  }

  if (!std::isfinite(losses.policy_loss)) throw NumericError("ppo_losses: policy_loss is non-finite");
  if (!std::isfinite(losses.value_loss)) throw NumericError("ppo_losses: value_loss is non-finite");
  if (!std::isfinite(losses.entropy)) throw NumericError("ppo_losses: entropy is non-finite");

  if (flat_grads) {
    MlpGrads actor_grads = mlp_backward(actor.mean_net, actor_cache, dmean);
    MlpGrads critic_grads = mlp_backward(critic, critic_cache, dvalue);
    flat_grads->clear();
    for (const auto& l : actor_grads.layers) {
      flat_grads->insert(flat_grads->end(), l.weight.data.begin(), l.weight.data.end());
      flat_grads->insert(flat_grads->end(), l.bias.begin(), l.bias.end());
    }
    flat_grads->insert(flat_grads->end(), dlog_std.begin(), dlog_std.end());
    for (const auto& l : critic_grads.layers) {
      flat_grads->insert(flat_grads->end(), l.weight.data.begin(), l.weight.data.end());
      flat_grads->insert(flat_grads->end(), l.bias.begin(), l.bias.end());
    }
  }
  return losses;
}

}  // namespace detail

/// Clipped-surrogate PPO losses on one minibatch (no gradients).
inline PpoLosses ppo_losses(const GaussianPolicy& actor, const MlpParams& critic, const Minibatch& mb,
                            const PpoConfig& cfg) {
  return detail::ppo_loss_grads(actor, critic, mb, cfg, nullptr);
}

struct PpoUpdateStats {
  double mean_policy_loss = 0.0;
  double mean_value_loss = 0.0;
  double mean_entropy = 0.0;
  std::size_t minibatches = 0;
};

struct PpoUpdateResult {
  AgentArtifact artifact;
  PpoUpdateStats stats;
};

/// Advantages and returns for a full buffer, stitched chunk by chunk and
/// normalized to mean 0 / std 1 (std floor 1e-8) across the buffer.
inline GaeResult buffer_advantages(const TransitionBuffer& buffer, const PpoConfig& cfg,
                                   bool normalize = true) {
  GaeResult all;
  all.advantages.assign(buffer.length(), 0.0);
  all.returns.assign(buffer.length(), 0.0);
  std::size_t covered = 0;
  for (const auto& chunk : buffer.chunks()) {
    std::vector<double> r(buffer.rewards().begin() + chunk.offset,
                          buffer.rewards().begin() + chunk.offset + chunk.length);
    std::vector<double> v(buffer.values().begin() + chunk.offset,
                          buffer.values().begin() + chunk.offset + chunk.length);
    std::vector<std::uint8_t> d(buffer.dones().begin() + chunk.offset,
                                buffer.dones().begin() + chunk.offset + chunk.length);
    GaeResult g = compute_gae(r, v, d, chunk.bootstrap_value, cfg.gamma, cfg.gae_lambda);
    std::copy(g.advantages.begin(), g.advantages.end(), all.advantages.begin() + chunk.offset);
    std::copy(g.returns.begin(), g.returns.end(), all.returns.begin() + chunk.offset);
    covered += chunk.length;
  }
  if (covered != buffer.length()) {
    throw UsageError("buffer_advantages: chunks cover " + std::to_string(covered) + " of " +
                     std::to_string(buffer.length()) + " transitions");
  }
  if (normalize && !all.advantages.empty()) {
    const double n = static_cast<double>(all.advantages.size());
    double mean = std::accumulate(all.advantages.begin(), all.advantages.end(), 0.0) / n;
    double var = 0.0;
    for (double a : all.advantages) var += (a - mean) * (a - mean);
    var /= n;
    const double denom = std::max(std::sqrt(var), 1e-8);
    for (double& a : all.advantages) a = (a - mean) / denom;
  }
  return all;
}

/// One PPO update: epochs_per_update passes of shuffled full minibatches over
/// the buffer, Adam on actor+critic jointly. Pure with respect to its inputs;
/// the returned artifact is a trained copy.
inline PpoUpdateResult ppo_update(const AgentArtifact& artifact, const TransitionBuffer& buffer,
                                  const PpoConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (!buffer.full()) {
    throw UsageError("ppo_update: buffer has " + std::to_string(buffer.length()) + " of " +
                     std::to_string(buffer.capacity()) + " transitions");
  }
  if (buffer.length() < cfg.minibatch_size) {
    throw UsageError("ppo_update: buffer length " + std::to_string(buffer.length()) +
                     " shorter than minibatch_size " + std::to_string(cfg.minibatch_size));
  }

  GaeResult gae = buffer_advantages(buffer, cfg);

  PpoUpdateResult res;
  res.artifact = artifact;
  res.artifact.optimizer.lr = cfg.learning_rate;
  std::vector<double> flat = res.artifact.flatten_params();

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> indices(buffer.length());
  std::iota(indices.begin(), indices.end(), 0);
  std::vector<double> grads;

  for (std::size_t epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    std::shuffle(indices.begin(), indices.end(), rng);
    for (std::size_t start = 0; start + cfg.minibatch_size <= indices.size();
         start += cfg.minibatch_size) {
      Minibatch mb = gather_minibatch(buffer, gae.advantages, gae.returns, indices.data() + start,
                                      cfg.minibatch_size);
      PpoLosses losses =
          detail::ppo_loss_grads(res.artifact.actor, res.artifact.critic, mb, cfg, &grads);
      adam_step(flat, grads, res.artifact.optimizer);
      res.artifact.unflatten_params(flat);
      res.stats.mean_policy_loss += losses.policy_loss;
      res.stats.mean_value_loss += losses.value_loss;
      res.stats.mean_entropy += losses.entropy;
      res.stats.minibatches += 1;
    }
  }
  if (res.stats.minibatches > 0) {
    const double inv = 1.0 / static_cast<double>(res.stats.minibatches);
    res.stats.mean_policy_loss *= inv;
    res.stats.mean_value_loss *= inv;
    res.stats.mean_entropy *= inv;
  }
  return res;
}

}  // namespace podracer
