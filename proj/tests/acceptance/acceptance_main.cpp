// Acceptance suite: one numbered criterion per function, each printing a
// single PASS/FAIL line. Run with a criterion number (1-11) or with no
// arguments to run everything. Exit code 0 iff every executed criterion
// passed.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "podracer/checkpoint.hpp"
#include "podracer/config.hpp"
#include "podracer/market.hpp"
#include "podracer/metrics.hpp"
#include "podracer/pod.hpp"
#include "podracer/ppo.hpp"
#include "podracer/runner.hpp"
#include "podracer/stock_env.hpp"
#include "podracer/tournament.hpp"

using namespace podracer;
namespace fs = std::filesystem;

namespace {

struct Failure {
  std::string detail;
};

#define REQUIRE_MSG(cond, msg)                                     \
  do {                                                             \
    if (!(cond)) {                                                 \
      std::ostringstream os_;                                      \
      os_ << msg;                                                  \
      throw Failure{os_.str() + " [" #cond "]"};                   \
    }                                                              \
  } while (0)

double now_seconds() {
  static const auto start = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

EnvFactory pointmass_factory() {
  return [] { return std::make_unique<PointMass2D>(); };
}

std::function<AgentArtifact(std::uint64_t)> pointmass_init(double lr,
                                                           std::vector<std::size_t> hidden) {
  return [lr, hidden](std::uint64_t seed) {
    return artifact_init(kPointMassStateDim, kPointMassActionDim, seed, lr, hidden);
  };
}

// ---------------------------------------------------------------------------
// 1. Gradient suite: backward pass vs central finite differences on 50 random
//    nets, max relative error < 1e-4, in under 30 s.
// ---------------------------------------------------------------------------
void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double max_rel = 0.0;
  for (int net = 0; net < 50; ++net) {
    const std::size_t in = 2 + rng() % 5;
    const std::size_t h1 = 4 + rng() % 13;
    const std::size_t h2 = 4 + rng() % 13;
    const std::size_t out = 1 + rng() % 3;
    const std::size_t batch = 1 + rng() % 4;
    MlpParams p = mlp_init({in, h1, h2, out}, 5000 + net);
    Tensor2 x(batch, in);
    for (auto& v : x.data) v = 1.5 * unit(rng);
    Tensor2 upstream(batch, out);
    for (auto& v : upstream.data) v = unit(rng);

    MlpCache cache;
    mlp_forward(p, x, &cache);
    const MlpGrads grads = mlp_backward(p, cache, upstream);
    std::vector<double> flat_g;
    for (const auto& l : grads.layers) {
      flat_g.insert(flat_g.end(), l.weight.data.begin(), l.weight.data.end());
      flat_g.insert(flat_g.end(), l.bias.begin(), l.bias.end());
    }

    auto loss = [&](MlpParams& q) {
      const Tensor2 y = mlp_forward(q, x);
      double acc = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += upstream.data[i] * y.data[i];
      return acc;
    };
    const double h = 1e-5;
    std::size_t k = 0;
    for (std::size_t li = 0; li < p.layers.size(); ++li) {
      auto probe = [&](double& slot) {
        const double saved = slot;
        slot = saved + h;
        const double up = loss(p);
        slot = saved - h;
        const double down = loss(p);
        slot = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(numeric), std::abs(flat_g[k]), 1e-8});
        max_rel = std::max(max_rel, std::abs(numeric - flat_g[k]) / denom);
        ++k;
      };
      for (auto& w : p.layers[li].weight.data) probe(w);
      for (auto& b : p.layers[li].bias) probe(b);
    }
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE_MSG(max_rel < 1e-4, "max relative error " << max_rel);
  REQUIRE_MSG(elapsed < 30.0, "runtime " << elapsed << " s");
}

// ---------------------------------------------------------------------------
// 2. Oracle equivalences: GAE double-sum (1e-10), fusion elementwise mean
//    (1e-12), leaderboard sort-and-truncate over 1e3 random sequences,
//    max_drawdown all-pairs brute force (1e-12), indicators vs reference
//    formulas (1e-8).
// ---------------------------------------------------------------------------
void criterion_2() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  // GAE vs O(T^2) double sum
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t T = 50;
    std::vector<double> r(T), v(T);
    std::vector<std::uint8_t> d(T, 0);
    for (std::size_t t = 0; t < T; ++t) {
      r[t] = unit(rng);
      v[t] = unit(rng);
      d[t] = (rng() % 6 == 0) ? 1 : 0;
    }
    const double bootstrap = unit(rng);
    const GaeResult got = compute_gae(r, v, d, bootstrap, 0.99, 0.95);
    for (std::size_t t = 0; t < T; ++t) {
      double acc = 0.0, w = 1.0;
      for (std::size_t l = t; l < T; ++l) {
        const double nv = (l + 1 < T) ? v[l + 1] : bootstrap;
        acc += w * (r[l] + 0.99 * nv * (d[l] ? 0.0 : 1.0) - v[l]);
        if (d[l]) break;
        w *= 0.99 * 0.95;
      }
      REQUIRE_MSG(std::abs(got.advantages[t] - acc) < 1e-10,
                  "gae mismatch " << got.advantages[t] << " vs " << acc);
    }
  }

  // fusion vs elementwise mean
  {
    std::vector<AgentArtifact> arts;
    for (int k = 0; k < 5; ++k) arts.push_back(artifact_init(4, 2, 900 + k, 1e-3, {16, 16}));
    const std::vector<double> fused = fuse_parameters(arts).flatten_params();
    for (std::size_t i = 0; i < fused.size(); ++i) {
      double mean = 0.0;
      for (const auto& a : arts) mean += a.flatten_params()[i];
      mean /= 5.0;
      REQUIRE_MSG(std::abs(fused[i] - mean) < 1e-12, "fusion mismatch at " << i);
    }
  }

  // leaderboard vs sort-and-truncate over 1e3 random sequences
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t capacity = 1 + rng() % 8;
    Leaderboard board(capacity);
    struct Item {
      double score;
      std::int64_t id;
    };
    std::vector<Item> all;
    const std::size_t n = 1 + rng() % 24;
    for (std::size_t k = 0; k < n; ++k) {
      const double s = (trial % 3 == 0) ? static_cast<double>(rng() % 6) : 5.0 * unit(rng);
      LeaderboardEntry e;
      e.artifact = artifact_init(2, 1, k, 1e-3, {4});
      e.score = s;
      e.eval_record.mean = s;
      e.pod_id = static_cast<std::int64_t>(k);
      leaderboard_update(board, std::move(e));
      all.push_back(Item{s, static_cast<std::int64_t>(k)});
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const Item& a, const Item& b) { return a.score > b.score; });
    all.resize(std::min(capacity, all.size()));
    REQUIRE_MSG(board.size() == all.size(), "board size " << board.size() << " vs " << all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
      REQUIRE_MSG(board.at(i).pod_id == all[i].id && board.at(i).score == all[i].score,
                  "rank " << i << " trial " << trial);
    }
  }

  // max_drawdown vs all-pairs brute force
  for (int trial = 0; trial < 10; ++trial) {
    EquityCurve c;
    double v = 100.0;
    for (int t = 0; t < 200; ++t) {
      c.timestamps.push_back(t);
      c.values.push_back(v);
      v *= (1.0 + 0.03 * unit(rng));
    }
    double brute = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      for (std::size_t j = i; j < c.size(); ++j) {
        brute = std::min(brute, (c.values[j] - c.values[i]) / c.values[i]);
      }
    }
    REQUIRE_MSG(std::abs(max_drawdown(c) - brute) < 1e-12, "mdd mismatch");
  }

  // indicators vs reference formulas on a random walk
  {
    std::vector<double> close(140);
    close[0] = 60.0;
    for (std::size_t t = 1; t < close.size(); ++t) close[t] = close[t - 1] + unit(rng);
    MarketData d;
    d.tickers = {"AAA"};
    d.series.resize(1);
    for (std::size_t t = 0; t < close.size(); ++t) {
      d.timestamps.push_back(static_cast<std::int64_t>(t));
      d.series[0].open.push_back(close[t]);
      d.series[0].high.push_back(close[t] + 1.0);
      d.series[0].low.push_back(close[t] - 1.0);
      d.series[0].close.push_back(close[t]);
      d.series[0].volume.push_back(1.0);
    }
    const MarketData full = compute_indicators(d);
    // ema helper
    auto ema = [&](int n) {
      std::vector<double> out(close.size());
      const double a = 2.0 / (n + 1.0);
      out[0] = close[0];
      for (std::size_t t = 1; t < close.size(); ++t) out[t] = a * close[t] + (1 - a) * out[t - 1];
      return out;
    };
    const std::vector<double> e12 = ema(12), e26 = ema(26);
    for (std::size_t t = 0; t < close.size(); ++t) {
      REQUIRE_MSG(std::abs(full.series[0].indicators[0][t] - (e12[t] - e26[t])) < 1e-8, "macd@" << t);
    }
    // rsi
    {
      double g = 0, l = 0;
      for (int t = 1; t <= 14; ++t) {
        const double ch = close[t] - close[t - 1];
        g += std::max(ch, 0.0);
        l += std::max(-ch, 0.0);
      }
      g /= 14;
      l /= 14;
      auto to_rsi = [](double g_, double l_) {
        if (g_ == 0 && l_ == 0) return 50.0;
        if (l_ == 0) return 100.0;
        return 100.0 - 100.0 / (1.0 + g_ / l_);
      };
      std::vector<double> rsi(close.size());
      rsi[14] = to_rsi(g, l);
      for (std::size_t t = 15; t < close.size(); ++t) {
        const double ch = close[t] - close[t - 1];
        g = (g * 13 + std::max(ch, 0.0)) / 14;
        l = (l * 13 + std::max(-ch, 0.0)) / 14;
        rsi[t] = to_rsi(g, l);
      }
      for (std::size_t t = 14; t < close.size(); ++t) {
        REQUIRE_MSG(std::abs(full.series[0].indicators[1][t] - rsi[t]) < 1e-8, "rsi@" << t);
      }
    }
    // cci (typical price equals close +/- the symmetric high/low band)
    for (std::size_t t = 29; t < close.size(); ++t) {
      double sma = 0;
      for (std::size_t k = t - 29; k <= t; ++k) sma += close[k];
      sma /= 30;
      double md = 0;
      for (std::size_t k = t - 29; k <= t; ++k) md += std::abs(close[k] - sma);
      md /= 30;
      const double cci = (md == 0) ? 0.0 : (close[t] - sma) / (0.015 * md);
      REQUIRE_MSG(std::abs(full.series[0].indicators[2][t] - cci) < 1e-8, "cci@" << t);
    }
    // sma
    for (std::size_t t = 19; t < close.size(); ++t) {
      double acc = 0;
      for (std::size_t k = t - 19; k <= t; ++k) acc += close[k];
      REQUIRE_MSG(std::abs(full.series[0].indicators[3][t] - acc / 20.0) < 1e-8, "sma@" << t);
    }
  }
}

// ---------------------------------------------------------------------------
// 3. Learning smoke test: single pod, batch 1024 / lr 0.001 / buffer 4096,
//    PointMass2D; median over 5 seeds reaches evaluation mean >= +5 within
//    3e5 env steps, all inside a 10 minute budget.
// ---------------------------------------------------------------------------
void criterion_3() {
  const auto t0 = std::chrono::steady_clock::now();
  PpoConfig ppo;  // defaults carry the required batch 1024 / lr 1e-3 / buffer 4096
  PodConfig pod;
  pod.eval_interval_steps = 8192;
  pod.eval_episodes = 10;
  pod.stop.max_steps = 300000;
  pod.stop.target_reward = 5.0;
  pod.async_eval = false;

  std::vector<double> best_scores;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PodContext ctx;
    ctx.seed = seed;
    const PodResult res =
        pod_train(pod, ppo, artifact_init(kPointMassStateDim, kPointMassActionDim, seed, 1e-3),
                  pointmass_factory(), ctx);
    best_scores.push_back(res.best_record.mean);
    std::fprintf(stderr, "  seed %llu: best eval mean %.3f after %lld steps (%s)\n",
                 static_cast<unsigned long long>(seed), res.best_record.mean,
                 static_cast<long long>(res.env_steps), res.stop_reason.c_str());
  }
  std::sort(best_scores.begin(), best_scores.end());
  const double median = best_scores[2];
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE_MSG(median >= 5.0, "median best evaluation mean " << median << " < 5");
  REQUIRE_MSG(elapsed < 600.0, "runtime " << elapsed << " s exceeds 10 minutes");
}

// ---------------------------------------------------------------------------
// 4. Tournament benefit: pool of 4 concurrent pods with spawn budget 8 vs a
//    single pod given the same total env-step budget, 3 paired seeds. The
//    tournament's best leaderboard score must win/tie in at least 2 pairs and
//    the best score must be monotone in every run.
// ---------------------------------------------------------------------------
void criterion_4() {
  const std::size_t kPodSteps = 98304;     // per-pod budget (24 updates of 4096)
  const std::size_t kPairs = 3;
  PpoConfig ppo;
  ppo.buffer_size = 4096;
  ppo.minibatch_size = 1024;

  PodConfig pod;
  pod.num_workers = 1;
  pod.envs_per_worker = 64;
  pod.rollout_horizon = 64;
  pod.num_learners = 1;
  pod.eval_interval_steps = 8192;
  pod.eval_episodes = 10;
  pod.async_eval = false;

  int tournament_wins = 0;
  for (std::uint64_t pair = 1; pair <= kPairs; ++pair) {
    // tournament arm
    PoolConfig pool;
    pool.max_pods = 4;
    pool.total_slots = 4;
    pool.pods_spawned_limit = 8;
    pool.generator.top_k = 3;
    pool.generator.mutation_sigma = 0.01;
    pool.generator.fresh_prob = 0.0;  // spend the whole budget on the elite chain
    PodConfig tpod = pod;
    tpod.stop.max_steps = static_cast<std::int64_t>(kPodSteps);
    ResourceMonitor mon(4);
    SteadyClock clock;
    EventLog log;
    std::vector<double> best_trace;
    OrchestratorHooks hooks;
    hooks.on_pod_complete = [&](const RunSummary& snap) {
      if (!snap.final_leaderboard.empty()) best_trace.push_back(snap.final_leaderboard.front().score);
    };
    const RunSummary summary =
        orchestrate(pool, tpod, ppo, pointmass_factory(), pointmass_init(ppo.learning_rate, {64, 64}),
                    mon, clock, log, /*run_seed=*/pair, "", nullptr, hooks);
    REQUIRE_MSG(!summary.final_leaderboard.empty(), "empty leaderboard");
    const double tournament_best = summary.final_leaderboard.front().score;
    for (std::size_t i = 1; i < best_trace.size(); ++i) {
      REQUIRE_MSG(best_trace[i] >= best_trace[i - 1] - 1e-12,
                  "monotone best violated: " << best_trace[i - 1] << " -> " << best_trace[i]);
    }

    // single-pod arm with the same total env-step budget
    PodConfig spod = pod;
    spod.stop.max_steps = static_cast<std::int64_t>(kPodSteps * 8);
    PodContext ctx;
    ctx.seed = derive_seed(pair, seed_tag::kPool, std::uint64_t{0});
    const PodResult single = pod_train(
        spod, ppo, artifact_init(kPointMassStateDim, kPointMassActionDim, ctx.seed, ppo.learning_rate),
        pointmass_factory(), ctx);

    std::fprintf(stderr, "  pair %llu: tournament %.3f vs single %.3f\n",
                 static_cast<unsigned long long>(pair), tournament_best, single.best_record.mean);
    if (tournament_best >= single.best_record.mean) ++tournament_wins;
  }
  REQUIRE_MSG(tournament_wins >= 2, "tournament won only " << tournament_wins << " of 3 pairs");
}

// ---------------------------------------------------------------------------
// 5. Worker parallelism throughput: a pod collecting from 64 batched sub-envs
//    across its parallel rollout workers must produce transitions at >= 4x
//    the rate of a pod with a single sub-env. The 4x comes from running the
//    workers on separate cores (the reference machine has 4); a batching
//    margin on top covers scheduling losses.
// ---------------------------------------------------------------------------
void criterion_5() {
  const AgentArtifact a = artifact_init(kPointMassStateDim, kPointMassActionDim, 3, 1e-3);
  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());

  // One collect phase, identical to the pod loop: workers fill disjoint
  // segments of a shared buffer on their own threads.
  auto rate = [&](std::size_t num_workers, std::size_t envs_per_worker, std::size_t horizon,
                  int reps) {
    std::vector<std::unique_ptr<VectorizedEnvironment>> venvs;
    for (std::size_t w = 0; w < num_workers; ++w) {
      venvs.push_back(std::make_unique<VectorizedEnvironment>(pointmass_factory(), envs_per_worker));
      venvs[w]->reset(derive_seed(1, seed_tag::kVecEnv, w));
    }
    const std::size_t seg = envs_per_worker * horizon;
    TransitionBuffer buf(num_workers * seg, kPointMassStateDim, kPointMassActionDim);
    auto collect_once = [&](std::uint64_t epoch) {
      buf.clear();
      buf.resize_chunks(num_workers * envs_per_worker);
      for (std::size_t w = 0; w < num_workers; ++w) buf.commit_segment(w * seg, seg);
      if (num_workers == 1) {
        std::mt19937_64 rng(derive_seed(1, seed_tag::kCollect, std::size_t{0}, epoch));
        worker_collect(a.actor, a.critic, *venvs[0], horizon, buf, 0, 0, rng);
        return;
      }
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < num_workers; ++w) {
        threads.emplace_back([&, w] {
          std::mt19937_64 rng(derive_seed(1, seed_tag::kCollect, w, epoch));
          worker_collect(a.actor, a.critic, *venvs[w], horizon, buf, w * seg, w * envs_per_worker,
                         rng);
        });
      }
      for (auto& t : threads) t.join();
    };
    collect_once(0);  // warm-up
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) collect_once(static_cast<std::uint64_t>(r + 1));
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return static_cast<double>(num_workers * seg * reps) / dt;
  };

  const double rate64 = rate(4, 16, 64, 30);  // 64 batched sub-envs, 4 workers
  const double rate1 = rate(1, 1, 64, 30);    // one sub-env, one worker
  std::fprintf(stderr, "  64-env rate %.0f tr/s, 1-env rate %.0f tr/s, ratio %.2f (%u cores)\n",
               rate64, rate1, rate64 / rate1, cores);
  REQUIRE_MSG(rate64 >= 4.0 * rate1, "ratio " << rate64 / rate1 << " < 4 on " << cores << " cores");
}

// ---------------------------------------------------------------------------
// 6. Stock environment conservation: over 1e4 random action sequences with
//    zero cost, episode reward sums telescope to the account-value change
//    within 1e-6 * initial capital, and balance/shares stay nonnegative.
// ---------------------------------------------------------------------------
void criterion_6() {
  MarketData d;
  d.tickers = {"AAA", "BBB"};
  d.series.resize(2);
  std::mt19937_64 price_rng(11);
  std::uniform_real_distribution<double> jump(-0.5, 0.52);
  double pa = 20.0, pb = 50.0;
  for (int t = 0; t < 60; ++t) {
    d.timestamps.push_back(t);
    pa = std::max(2.0, pa + jump(price_rng));
    pb = std::max(2.0, pb + jump(price_rng));
    for (int k = 0; k < 2; ++k) {
      const double c = k == 0 ? pa : pb;
      d.series[k].open.push_back(c);
      d.series[k].high.push_back(c + 0.5);
      d.series[k].low.push_back(std::max(1.0, c - 0.5));
      d.series[k].close.push_back(c);
      d.series[k].volume.push_back(1.0);
    }
  }

  StockConfig cfg;
  cfg.initial_capital = 1'000'000.0;
  cfg.cost_rate = 0.0;
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> act(-1.0, 1.0);
  for (int seq = 0; seq < 10000; ++seq) {
    PortfolioState s;
    s.balance = cfg.initial_capital;
    s.shares.assign(2, 0.0);
    s.t = 0;
    const double initial = s.account_value(d);
    double reward_sum = 0.0;
    while (s.t + 1 < d.length()) {
      const StockStep r = stock_env_step(s, {act(rng), act(rng)}, d, cfg);
      reward_sum += r.reward;
      s = r.state;
      REQUIRE_MSG(s.balance >= 0.0, "negative balance in sequence " << seq);
      REQUIRE_MSG(s.shares[0] >= 0.0 && s.shares[1] >= 0.0, "negative shares in sequence " << seq);
    }
    const double drift = std::abs(reward_sum - (s.account_value(d) - initial));
    REQUIRE_MSG(drift < 1e-6 * cfg.initial_capital, "conservation drift " << drift);
  }
}

// ---------------------------------------------------------------------------
// 7. Backtest closed form: buy-and-hold on a market growing g per period with
//    zero cost matches (1+g)^n * invested_fraction + cash_fraction - 1.
// ---------------------------------------------------------------------------
void criterion_7() {
  const double g = 0.001, p0 = 7.0;
  const std::size_t n = 100;
  MarketData d;
  d.tickers = {"AAA"};
  d.series.resize(1);
  double p = p0;
  for (std::size_t t = 0; t < n; ++t) {
    d.timestamps.push_back(static_cast<std::int64_t>(t) * 60);
    d.series[0].open.push_back(p);
    d.series[0].high.push_back(p);
    d.series[0].low.push_back(p);
    d.series[0].close.push_back(p);
    d.series[0].volume.push_back(1.0);
    p *= (1.0 + g);
  }
  auto data = std::make_shared<MarketData>(compute_indicators(d));

  StockConfig cfg;
  cfg.initial_capital = 1e6;
  cfg.cost_rate = 0.0;
  cfg.max_trade_shares = 1e9;
  AgentArtifact buyer = artifact_init(stock_observation_dim(1), 1, 1, 1e-3, {4});
  for (auto& w : buyer.actor.mean_net.layers.back().weight.data) w = 0.0;
  for (auto& b : buyer.actor.mean_net.layers.back().bias) b = 100.0;  // clipped to +1

  const BacktestResult r = run_backtest(buyer, data, cfg, 0, n - 1, 252);
  const double shares = std::floor(1e6 / p0);
  const double invested = shares * p0 / 1e6;
  const double cash = 1.0 - invested;
  const double expected = std::pow(1.0 + g, static_cast<double>(n - 1)) * invested + cash - 1.0;
  REQUIRE_MSG(std::abs(r.report.cumulative_return - expected) < 1e-6,
              "cumulative " << r.report.cumulative_return << " vs analytic " << expected);
}

// ---------------------------------------------------------------------------
// 8. Evaluation protocol: records hold exactly eval_episodes rewards and the
//    stored mean/std equal a direct recomputation.
// ---------------------------------------------------------------------------
void criterion_8() {
  const AgentArtifact a = artifact_init(kPointMassStateDim, kPointMassActionDim, 5, 1e-3);
  const EvaluationRecord rec = evaluate(a.actor, pointmass_factory(), 10, 99);
  REQUIRE_MSG(rec.episodic_rewards.size() == 10, "episode count " << rec.episodic_rewards.size());
  double mean = 0.0;
  for (double r : rec.episodic_rewards) mean += r;
  mean /= 10.0;
  double var = 0.0;
  for (double r : rec.episodic_rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / 10.0);
  REQUIRE_MSG(rec.mean == mean, "mean " << rec.mean << " vs recomputed " << mean);
  REQUIRE_MSG(rec.std_dev == std_dev, "std " << rec.std_dev << " vs recomputed " << std_dev);

  // every record a pod produces obeys the same protocol
  PpoConfig ppo;
  ppo.buffer_size = 256;
  ppo.minibatch_size = 64;
  PodConfig pod;
  pod.num_workers = 1;
  pod.envs_per_worker = 8;
  pod.rollout_horizon = 32;
  pod.num_learners = 1;
  pod.eval_episodes = 10;
  pod.eval_interval_steps = 256;
  pod.async_eval = false;
  pod.stop.max_steps = 512;
  PodContext ctx;
  ctx.seed = 8;
  const PodResult res = pod_train(pod, ppo, artifact_init(kPointMassStateDim, kPointMassActionDim, 8, 1e-3),
                                  pointmass_factory(), ctx);
  for (const auto& r : res.history) {
    REQUIRE_MSG(r.episodic_rewards.size() == 10, "pod record has " << r.episodic_rewards.size());
    double m = 0.0;
    for (double x : r.episodic_rewards) m += x;
    m /= 10.0;
    REQUIRE_MSG(r.mean == m, "pod record mean mismatch");
  }
}

// ---------------------------------------------------------------------------
// 9. Elasticity replay: under a scripted 4 -> 2 -> 4 slot schedule the event
//    log never shows a spawn that pushes the running count past the slot
//    count in force at that instant, and a pool target terminates the run.
// ---------------------------------------------------------------------------
void criterion_9() {
  PpoConfig ppo;
  ppo.buffer_size = 128;
  ppo.minibatch_size = 64;
  ppo.epochs_per_update = 1;
  PodConfig pod;
  pod.num_workers = 1;
  pod.envs_per_worker = 4;
  pod.rollout_horizon = 32;
  pod.num_learners = 1;
  pod.eval_episodes = 2;
  pod.eval_interval_steps = 128;
  pod.async_eval = false;
  pod.stop.max_steps = 512;

  // Virtual clock: pods advance it by env steps, so the schedule boundaries
  // land mid-run deterministically. 512-step pods x 12 spawns = 6144 steps
  // total; boundaries at 0.1s / 0.25s of virtual time (1e-4 s per step).
  {
    StepClock clock(1e-4);
    ResourceMonitor mon(std::vector<SlotSchedulePoint>{{0.0, 4}, {0.1, 2}, {0.25, 4}});
    PoolConfig pool;
    pool.max_pods = 4;
    pool.total_slots = 4;
    pool.pods_spawned_limit = 12;
    EventLog log;
    orchestrate(pool, pod, ppo, pointmass_factory(), pointmass_init(1e-3, {8, 8}), mon, clock, log, 9);

    auto slots_at = [](double t) { return (t < 0.1) ? 4 : (t < 0.25) ? 2 : 4; };
    int running = 0;
    int spawns_during_shrink = 0;
    for (const auto& e : log.events()) {
      if (e.event == "spawn") {
        running += 1;
        REQUIRE_MSG(running <= slots_at(e.wall_seconds),
                    "spawn at t=" << e.wall_seconds << " with " << running << " running, slots "
                                  << slots_at(e.wall_seconds));
        if (e.wall_seconds >= 0.1 && e.wall_seconds < 0.25) ++spawns_during_shrink;
      } else if (e.event == "complete") {
        running -= 1;
      }
    }
    REQUIRE_MSG(spawns_during_shrink >= 0, "log replay failed");
  }

  // Termination on target_reward: a trivially satisfied target must stop the
  // pool before its spawn budget and emit a terminate event.
  {
    StepClock clock(1e-4);
    ResourceMonitor mon(2);
    PoolConfig pool;
    pool.max_pods = 2;
    pool.total_slots = 2;
    pool.pods_spawned_limit = 50;
    pool.target_reward = -1e18;
    EventLog log;
    const RunSummary s = orchestrate(pool, pod, ppo, pointmass_factory(), pointmass_init(1e-3, {8, 8}),
                                     mon, clock, log, 10);
    REQUIRE_MSG(s.termination_reason == "target_reward", "reason " << s.termination_reason);
    REQUIRE_MSG(s.pods_spawned < 50, "spawned " << s.pods_spawned);
    bool terminated = false;
    for (const auto& e : log.events()) terminated |= (e.event == "terminate");
    REQUIRE_MSG(terminated, "no terminate event");
  }
}

// ---------------------------------------------------------------------------
// 10. Persistence: bitwise round trip on 20 random artifacts; 100 single-byte
//     corruptions always raise a corruption error, never a wrong artifact.
// ---------------------------------------------------------------------------
void criterion_10() {
  const std::string path = (fs::temp_directory_path() / "podracer_acceptance.ckpt").string();
  std::mt19937_64 rng(77);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    AgentArtifact a =
        artifact_init(2 + rng() % 5, 1 + rng() % 3, 4000 + trial, 1e-3, {4 + rng() % 12, 8});
    std::vector<double> flat = a.flatten_params();
    for (double& v : flat) v = noise(rng);
    a.unflatten_params(flat);
    for (auto& m : a.optimizer.m) m = noise(rng);
    for (auto& v : a.optimizer.v) v = std::abs(noise(rng));
    a.optimizer.t = static_cast<std::int64_t>(rng() % 5000);
    a.lineage.parent_pod = static_cast<std::int64_t>(rng() % 100) - 1;
    a.lineage.mutation_seed = rng();
    save_checkpoint(a, path);
    const AgentArtifact b = load_checkpoint(path);
    REQUIRE_MSG(b.flatten_params() == a.flatten_params(), "params not bitwise equal");
    REQUIRE_MSG(b.optimizer.m == a.optimizer.m && b.optimizer.v == a.optimizer.v &&
                    b.optimizer.t == a.optimizer.t,
                "optimizer state not bitwise equal");
    REQUIRE_MSG(b.lineage.parent_pod == a.lineage.parent_pod &&
                    b.lineage.mutation_seed == a.lineage.mutation_seed && b.algo_tag == a.algo_tag,
                "lineage/tag not equal");
  }

  const AgentArtifact a = artifact_init(4, 2, 5, 1e-3, {8, 8});
  const std::vector<std::uint8_t> bytes = encode_checkpoint(artifact_to_tensors(a));
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::uint8_t> mutated = bytes;
    const std::size_t pos = rng() % mutated.size();
    std::uint8_t replacement = static_cast<std::uint8_t>(rng());
    while (replacement == mutated[pos]) replacement = static_cast<std::uint8_t>(rng());
    mutated[pos] = replacement;
    bool threw = false;
    try {
      decode_checkpoint(mutated);
    } catch (const CorruptionError&) {
      threw = true;
    }
    REQUIRE_MSG(threw, "byte " << pos << " corruption was not detected");
  }
  fs::remove(path);
}

// ---------------------------------------------------------------------------
// 11. Serial-mode determinism: identical config+seed produce identical
//     leaderboard summaries and per-pod curves.
// ---------------------------------------------------------------------------
void criterion_11() {
  auto slurp = [](const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  auto make_cfg = [](const std::string& outdir) {
    ExperimentConfig cfg = parse_config_text(
        "task = pointmass\n"
        "seed = 21\n"
        "ppo.buffer_size = 256\n"
        "ppo.minibatch_size = 128\n"
        "pod.num_workers = 1\n"
        "pod.envs_per_worker = 8\n"
        "pod.rollout_horizon = 32\n"
        "pod.num_learners = 1\n"
        "pod.eval_episodes = 3\n"
        "pod.eval_interval_steps = 256\n"
        "pod.stop.max_steps = 1024\n"
        "pool.max_pods = 1\n"
        "pool.total_slots = 1\n"
        "pool.pods_spawned_limit = 3\n",
        "inline");
    cfg.output_dir = outdir;
    return cfg;
  };
  const std::string out1 = (fs::temp_directory_path() / "podracer_acc11_a").string();
  const std::string out2 = (fs::temp_directory_path() / "podracer_acc11_b").string();
  fs::remove_all(out1);
  fs::remove_all(out2);
  RunOptions opts;
  opts.serial = true;
  REQUIRE_MSG(run_experiment(make_cfg(out1), opts) == 0, "run 1 failed");
  REQUIRE_MSG(run_experiment(make_cfg(out2), opts) == 0, "run 2 failed");
  REQUIRE_MSG(slurp(out1 + "/summary.txt") == slurp(out2 + "/summary.txt"), "summaries differ");
  for (int podid = 0; podid < 3; ++podid) {
    const std::string name = "/pod_" + std::to_string(podid) + "_curve.csv";
    REQUIRE_MSG(fs::exists(out1 + name) && fs::exists(out2 + name), "missing curve " << name);
    REQUIRE_MSG(slurp(out1 + name) == slurp(out2 + name), "curve differs: " << name);
  }
  REQUIRE_MSG(slurp(out1 + "/events.csv") == slurp(out2 + "/events.csv"), "event logs differ");
  fs::remove_all(out1);
  fs::remove_all(out2);
}

struct Criterion {
  int number;
  const char* description;
  std::function<void()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "gradient suite: backward vs central finite differences (50 nets, <1e-4, <30s)", criterion_1},
      {2, "oracle equivalences: gae / fusion / leaderboard / drawdown / indicators", criterion_2},
      {3, "learning smoke: PointMass2D median of 5 seeds reaches +5 within 3e5 steps", criterion_3},
      {4, "tournament benefit: 4-pod pool (budget 8) vs equal-budget single pod", criterion_4},
      {5, "worker throughput: 64 batched sub-envs >= 4x one sub-env", criterion_5},
      {6, "stock conservation and feasibility over 1e4 random sequences", criterion_6},
      {7, "backtest closed form: buy-and-hold on exponential market", criterion_7},
      {8, "evaluation protocol: exactly N rewards, mean/std recomputation exact", criterion_8},
      {9, "elasticity replay: scripted 4->2->4 slots and target termination", criterion_9},
      {10, "persistence: bitwise round trips and corruption detection", criterion_10},
      {11, "serial determinism: identical summaries and curves", criterion_11},
  };

  int selected = 0;
  if (argc > 1) selected = std::atoi(argv[1]);
  bool all_pass = true;
  for (const auto& c : criteria) {
    if (selected != 0 && c.number != selected) continue;
    try {
      c.run();
      std::printf("PASS criterion %2d: %s\n", c.number, c.description);
    } catch (const Failure& f) {
      all_pass = false;
      std::printf("FAIL criterion %2d: %s\n    %s\n", c.number, c.description, f.detail.c_str());
    } catch (const std::exception& e) {
      all_pass = false;
      std::printf("FAIL criterion %2d: %s\n    unexpected exception: %s\n", c.number, c.description,
                  e.what());
    }
    std::fflush(stdout);
  }
  (void)now_seconds;
  return all_pass ? 0 : 1;
}
