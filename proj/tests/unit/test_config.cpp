#include <gtest/gtest.h>

#include "podracer/config.hpp"

using namespace podracer;

TEST(Config, MinimalConfigAppliesDefaults) {
  const ExperimentConfig cfg = parse_config_text("task = pointmass\n", "test");
  EXPECT_EQ(cfg.task, TaskKind::PointMass);
  EXPECT_EQ(cfg.seed, 1u);
  EXPECT_EQ(cfg.ppo.buffer_size, 4096u);
  EXPECT_EQ(cfg.ppo.minibatch_size, 1024u);
  EXPECT_EQ(cfg.ppo.learning_rate, 1e-3);
  EXPECT_EQ(cfg.pod.num_workers, 2u);
  EXPECT_EQ(cfg.pod.envs_per_worker, 32u);
  EXPECT_EQ(cfg.pod.rollout_horizon, 64u);
  EXPECT_EQ(cfg.pod.eval_episodes, 10u);
  EXPECT_EQ(cfg.pool.generator.top_k, 3u);
  EXPECT_EQ(cfg.pool.generator.mutation_sigma, 0.01);
  EXPECT_EQ(cfg.pool.generator.fresh_prob, 0.2);
  EXPECT_EQ(cfg.stock.initial_capital, 1'000'000.0);
  EXPECT_EQ(cfg.stock.cost_rate, 0.002);
  EXPECT_EQ(cfg.data.split.train_start, parse_timestamp("2016-01-01"));
  EXPECT_EQ(cfg.data.split.backtest_end, parse_timestamp("2021-05-26"));
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, GeometryConstraintNamesFields) {
  const ExperimentConfig cfg =
      parse_config_text("task = pointmass\npod.rollout_horizon = 63\n", "test");
  try {
    cfg.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("pod.num_workers"), std::string::npos);
    EXPECT_NE(msg.find("ppo.buffer_size"), std::string::npos);
  }
}

TEST(Config, MinibatchLargerThanBufferRejected) {
  const ExperimentConfig cfg = parse_config_text(
      "task = pointmass\nppo.minibatch_size = 8192\n", "test");
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, RoundTripThroughEcho) {
  const std::string text =
      "task = pointmass\n"
      "seed = 77\n"
      "output_dir = /tmp/podracer_cfg_test\n"
      "ppo.gamma = 0.97\n"
      "ppo.learning_rate = 0.0005\n"
      "pod.num_workers = 4\n"
      "pod.envs_per_worker = 16\n"
      "pod.rollout_horizon = 64\n"
      "pod.stop.target_reward = 5.5\n"
      "pool.max_pods = 3\n"
      "pool.total_slots = 5\n"
      "pool.generator.fresh_prob = 0.35\n"
      "data.tickers = AAA, BBB ,CCC\n";
  const ExperimentConfig cfg = parse_config_text(text, "test");
  EXPECT_EQ(cfg.seed, 77u);
  EXPECT_EQ(cfg.data.tickers.size(), 3u);
  EXPECT_EQ(cfg.data.tickers[1], "BBB");
  ASSERT_TRUE(cfg.pod.stop.target_reward.has_value());
  EXPECT_EQ(*cfg.pod.stop.target_reward, 5.5);

  const std::string echoed = echo_config(cfg);
  const ExperimentConfig again = parse_config_text(echoed, "echo");
  EXPECT_EQ(echo_config(again), echoed);  // fixed point after one echo
  EXPECT_EQ(again.seed, cfg.seed);
  EXPECT_EQ(again.ppo.gamma, cfg.ppo.gamma);
  EXPECT_EQ(again.pod.stop.target_reward, cfg.pod.stop.target_reward);
  EXPECT_EQ(again.data.tickers, cfg.data.tickers);
  EXPECT_EQ(again.pool.target_reward, cfg.pool.target_reward);  // none round-trips
}

TEST(Config, UnknownKeySuggestsNearest) {
  try {
    parse_config_text("task = pointmass\nppo.gama = 0.9\n", "test");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("ppo.gama"), std::string::npos);
    EXPECT_NE(msg.find("ppo.gamma"), std::string::npos);
    EXPECT_NE(msg.find("test:2"), std::string::npos);  // line number
  }
}

TEST(Config, ValueErrorsCarryPosition) {
  try {
    parse_config_text("seed = notanumber\n", "myconf");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("myconf:1"), std::string::npos);
  }
  EXPECT_THROW(parse_config_text("pod.sampled_eval = yes\n", "t"), ConfigError);
  EXPECT_THROW(parse_config_text("task = chess\n", "t"), ConfigError);
  EXPECT_THROW(parse_config_text("net.activation = relu\n", "t"), ConfigError);
  EXPECT_THROW(parse_config_text("garbage line\n", "t"), ConfigError);
}

TEST(Config, StockTaskRequiresData) {
  const ExperimentConfig cfg = parse_config_text("task = stock\n", "test");
  EXPECT_THROW(cfg.validate(), ConfigError);
  const ExperimentConfig missing = parse_config_text(
      "task = stock\ndata.csv_path = /nonexistent/data.csv\ndata.tickers = AAA\n", "test");
  EXPECT_THROW(missing.validate(), ConfigError);
}

TEST(Config, CommentsAndBlanksIgnored) {
  const ExperimentConfig cfg = parse_config_text(
      "# a comment\n\n   \ntask = pointmass\n  # indented comment\nseed = 3\n", "test");
  EXPECT_EQ(cfg.seed, 3u);
}
