#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "podracer/common.hpp"
#include "podracer/tensor.hpp"

namespace podracer {

// ---------------------------------------------------------------------------
// MLP with manual backprop.
//
// Weight convention: layer weights are stored [in_dim x out_dim] and applied
// as Y = X * W + b on row-major batches, so consecutive layers chain as
// cols(W_i) == rows(W_{i+1}). Hidden layers use tanh, the output is linear.
// ---------------------------------------------------------------------------

struct MlpLayer {
  Tensor2 weight;             // [in x out]
  std::vector<double> bias;   // [out]
};

struct MlpParams {
  std::vector<MlpLayer> layers;

  std::size_t input_dim() const { return layers.front().weight.rows; }
  std::size_t output_dim() const { return layers.back().weight.cols; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }
};

/// Uniform init with scale 1/sqrt(fan_in) on weights, zero biases.
inline MlpParams mlp_init(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw UsageError("mlp_init: need at least input and output dims");
  std::mt19937_64 rng(seed);
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    MlpLayer layer;
    layer.weight = Tensor2(dims[i], dims[i + 1]);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (auto& w : layer.weight.data) w = dist(rng);
    layer.bias.assign(dims[i + 1], 0.0);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

/// Activations retained by mlp_forward for the matching backward pass.
/// acts[0] is the input batch, acts[i] the post-activation output of layer i.
struct MlpCache {
  std::vector<Tensor2> acts;
  const MlpParams* source = nullptr;  // identity check against stale reuse
};

inline Tensor2 mlp_forward(const MlpParams& params, const Tensor2& input, MlpCache* cache = nullptr) {
  if (input.cols != params.input_dim()) {
    throw DimensionError("mlp_forward: input " + input.shape_str() + " vs weights [" +
                         std::to_string(params.input_dim()) + "x..]");
  }
  if (cache) {
    cache->acts.clear();
    cache->acts.push_back(input);
    cache->source = &params;
  }
  Tensor2 h = input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    Tensor2 z = matmul(h, params.layers[i].weight);
    add_row_vector(z, params.layers[i].bias);
    const bool hidden = (i + 1 < params.layers.size());
    if (hidden) {
      for (auto& v : z.data) v = std::tanh(v);
    }
    if (cache) cache->acts.push_back(z);
    h = std::move(z);
  }
  return h;
}

/// Gradients in the same layout as MlpParams.
struct MlpGrads {
  std::vector<MlpLayer> layers;
};

inline MlpGrads mlp_zero_grads(const MlpParams& params) {
  MlpGrads g;
  for (const auto& l : params.layers) {
    MlpLayer gl;
    gl.weight = Tensor2(l.weight.rows, l.weight.cols);
    gl.bias.assign(l.bias.size(), 0.0);
    g.layers.push_back(std::move(gl));
  }
  return g;
}

/// Backprop of upstream_grad (dL/d_output) through the cached forward pass.
/// Accumulates into `grads` so several loss terms can share one call site.
inline void mlp_backward_accumulate(const MlpParams& params, const MlpCache& cache,
                                    const Tensor2& upstream_grad, MlpGrads& grads) {
  if (cache.source != &params || cache.acts.size() != params.layers.size() + 1) {
    throw UsageError("mlp_backward: cache does not match params");
  }
  if (upstream_grad.rows != cache.acts.back().rows || upstream_grad.cols != params.output_dim()) {
    throw DimensionError("mlp_backward: upstream " + upstream_grad.shape_str() + " vs output [" +
                         std::to_string(cache.acts.back().rows) + "x" +
                         std::to_string(params.output_dim()) + "]");
  }
  Tensor2 delta = upstream_grad;  // dL/dz of the current layer (output is linear)
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const Tensor2& layer_in = cache.acts[li];
    // dW = in^T * delta, db = colsum(delta)
    Tensor2 dw = matmul_tn(layer_in, delta);
    for (std::size_t k = 0; k < dw.data.size(); ++k) grads.layers[li].weight.data[k] += dw.data[k];
    std::vector<double> db = column_sums(delta);
    for (std::size_t k = 0; k < db.size(); ++k) grads.layers[li].bias[k] += db[k];
    if (li == 0) break;
    // dL/d(previous activation), then through tanh: a = tanh(z), da/dz = 1-a^2
    Tensor2 dprev = matmul_nt(delta, params.layers[li].weight);
    const Tensor2& a = cache.acts[li];
    for (std::size_t k = 0; k < dprev.data.size(); ++k) {
      dprev.data[k] *= (1.0 - a.data[k] * a.data[k]);
    }
    delta = std::move(dprev);
  }
}

inline MlpGrads mlp_backward(const MlpParams& params, const MlpCache& cache, const Tensor2& upstream_grad) {
  MlpGrads g = mlp_zero_grads(params);
  mlp_backward_accumulate(params, cache, upstream_grad, g);
  return g;
}

// ---------------------------------------------------------------------------
// Adam over a flat parameter vector.
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-3;
};

inline AdamState adam_init(std::size_t param_count, double lr) {
  AdamState s;
  s.m.assign(param_count, 0.0);
  s.v.assign(param_count, 0.0);
  s.lr = lr;
  return s;
}

/// One Adam update, in place on `params`. Rejects non-finite gradients
/// before touching any state, so a failed step leaves params and state intact.
inline void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("adam_step: params " + std::to_string(params.size()) + ", grads " +
                         std::to_string(grads.size()) + ", state " + std::to_string(state.m.size()));
  }
  if (!all_finite(grads.data(), grads.size())) {
    throw NumericError("adam_step: non-finite gradient, step aborted");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

// ---------------------------------------------------------------------------
// Diagonal-Gaussian policy: an MLP producing per-action means plus one
// state-independent log-std per action dimension.
// ---------------------------------------------------------------------------

struct GaussianPolicy {
  MlpParams mean_net;
  std::vector<double> log_std;

  std::size_t action_dim() const { return log_std.size(); }
};

inline GaussianPolicy policy_init(std::size_t state_dim, std::size_t action_dim,
                                  const std::vector<std::size_t>& hidden, std::uint64_t seed,
                                  double initial_log_std = 0.0) {
  std::vector<std::size_t> dims;
  dims.push_back(state_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(action_dim);
  GaussianPolicy p;
  p.mean_net = mlp_init(dims, seed);
  p.log_std.assign(action_dim, initial_log_std);
  return p;
}

constexpr double kLogTwoPi = 1.8378770664093454836;  // ln(2*pi)

namespace detail {

// Shared by gaussian_log_prob and policy_sample so both produce bit-identical
// densities for the same (mean, action) rows.
inline double gaussian_row_log_prob(const std::vector<double>& log_std, const double* mean_row,
                                    const double* action_row) {
  double acc = 0.0;
  for (std::size_t d = 0; d < log_std.size(); ++d) {
    const double sigma = std::exp(log_std[d]);
    const double z = (action_row[d] - mean_row[d]) / sigma;
    acc += -0.5 * kLogTwoPi - log_std[d] - 0.5 * z * z;
  }
  return acc;
}

}  // namespace detail

/// Per-row log density of `actions` under the policy at `states`.
inline std::vector<double> gaussian_log_prob(const GaussianPolicy& policy, const Tensor2& states,
                                             const Tensor2& actions) {
  Tensor2 mean = mlp_forward(policy.mean_net, states);
  if (!mean.same_shape(actions)) {
    throw DimensionError("gaussian_log_prob: actions " + actions.shape_str() + " vs mean " +
                         mean.shape_str());
  }
  std::vector<double> lp(states.rows, 0.0);
  for (std::size_t i = 0; i < states.rows; ++i) {
    lp[i] = detail::gaussian_row_log_prob(policy.log_std, mean.row(i), actions.row(i));
  }
  return lp;
}

struct PolicySample {
  Tensor2 actions;
  std::vector<double> log_probs;
};

/// Draws one action per state row. The stored log_probs equal
/// gaussian_log_prob(policy, states, actions) bit for bit.
inline PolicySample policy_sample(const GaussianPolicy& policy, const Tensor2& states,
                                  std::mt19937_64& rng) {
  check_finite(states, "policy_sample states");
  Tensor2 mean = mlp_forward(policy.mean_net, states);
  PolicySample out;
  out.actions = Tensor2(mean.rows, mean.cols);
  out.log_probs.resize(mean.rows);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < mean.rows; ++i) {
    for (std::size_t d = 0; d < mean.cols; ++d) {
      out.actions.at(i, d) = mean.at(i, d) + std::exp(policy.log_std[d]) * unit(rng);
    }
    out.log_probs[i] = detail::gaussian_row_log_prob(policy.log_std, mean.row(i), out.actions.row(i));
  }
  return out;
}

/// Deterministic head: the network mean (used by evaluators and backtests).
inline Tensor2 policy_mean(const GaussianPolicy& policy, const Tensor2& states) {
  return mlp_forward(policy.mean_net, states);
}

/// Entropy of the diagonal Gaussian; state-independent.
inline double policy_entropy(const GaussianPolicy& policy) {
  double h = 0.0;
  for (double ls : policy.log_std) h += 0.5 * (kLogTwoPi + 1.0) + ls;
  return h;
}

}  // namespace podracer
