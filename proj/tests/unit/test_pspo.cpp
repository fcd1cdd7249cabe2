#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "scout/advantage.hpp"
#include "scout/objective.hpp"
#include "scout/rollout.hpp"
#include "scout/trainer.hpp"
#include "test_support.hpp"

using namespace scout;

namespace {

struct Fixture {
  Corpus corpus = build_corpus(scout::testing::small_params(31));
  EnvConfig env;
  PolicySpec spec;

  Fixture() {
    env.l_expanded = 2;
    env.l_unexpanded = 2;
    env.max_calls = 2;
    env.max_turns = 6;
    spec.layout = layout_for(env, corpus);
    spec.n_directions = 2;
    spec.hidden = 4;
    spec.max_calls = 2;
  }

  TrainConfig config(Algorithm a) const {
    TrainConfig c;
    c.algorithm = a;
    c.n_train_queries = 10;
    c.episodes_per_step = 8;
    c.gspo_group = 4;
    c.pretrain_steps = 5;
    c.total_steps = 3;
    return c;
  }
};

// GAE as the explicit double sum over (gamma lambda)^l delta_{t+l}.
std::vector<double> gae_oracle(const std::vector<double>& r, const std::vector<double>& v, double g, double l) {
  std::vector<double> out(r.size(), 0.0);
  for (std::size_t t = 0; t < r.size(); ++t) {
    for (std::size_t k = t; k < r.size(); ++k) {
      const double delta = r[k] + g * v[k + 1] - v[k];
      out[t] += std::pow(g * l, static_cast<double>(k - t)) * delta;
    }
  }
  return out;
}

}  // namespace

TEST(Returns, HandExamples) {
  EXPECT_EQ(compute_returns(std::vector<double>{1, 1, 1}, 1.0), (std::vector<double>{3, 2, 1}));
  EXPECT_EQ(compute_returns(std::vector<double>{-2.5}, 0.7), std::vector<double>{-2.5});
  const auto r = compute_returns(std::vector<double>{1, 2}, 0.99);
  EXPECT_NEAR(r[0], 2.98, 1e-12);
  EXPECT_DOUBLE_EQ(r[1], 2.0);
  EXPECT_THROW(compute_returns(std::vector<double>{}, 0.9), InvariantError);
}

TEST(Returns, RecursionHolds) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto rw = scout::testing::random_vector(rng, 1 + rng() % 12, -3, 3);
    const auto r = compute_returns(rw, 0.99);
    for (std::size_t t = 0; t + 1 < r.size(); ++t) EXPECT_NEAR(r[t], rw[t] + 0.99 * r[t + 1], 1e-12);
    EXPECT_EQ(r.back(), rw.back());
  }
}

TEST(Normalize, ConstantReturnsGiveZeros) {
  RunningStats s;
  for (double v : normalize_returns(s, std::vector<double>{4, 4, 4})) EXPECT_EQ(v, 0.0);
}

TEST(Normalize, FirstBatch) {
  RunningStats s;
  const auto out = normalize_returns(s, std::vector<double>{0, 2});
  EXPECT_DOUBLE_EQ(s.mean, 1.0);
  EXPECT_NEAR(out[0], -1.0, 1e-7);
  EXPECT_NEAR(out[1], 1.0, 1e-7);
  EXPECT_NEAR(denormalize(s, out[1]), 2.0, 1e-12);
}

TEST(Normalize, MergeIsOrderIndependent) {
  std::mt19937_64 rng(4);
  RunningStats a;
  RunningStats b;
  RunningStats all;
  for (double x : scout::testing::random_vector(rng, 37, -5, 9)) {
    a.push(x);
    all.push(x);
  }
  for (double x : scout::testing::random_vector(rng, 11, 0, 30)) {
    b.push(x);
    all.push(x);
  }
  RunningStats ab = a;
  ab.merge(b);
  RunningStats ba = b;
  ba.merge(a);
  EXPECT_NEAR(ab.mean, ba.mean, 1e-9);
  EXPECT_NEAR(ab.mean, all.mean, 1e-9);
  EXPECT_NEAR(ab.variance(), all.variance(), 1e-9);
  EXPECT_GE(ab.variance(), 0.0);
}

TEST(Gae, LambdaZeroIsTdError) {
  const std::vector<double> r{1.0, -0.5, 2.0};
  const std::vector<double> v{0.3, 0.1, 0.7, 0.0};
  const auto a = compute_gae(r, v, 0.9, 0.0);
  for (std::size_t t = 0; t < r.size(); ++t) EXPECT_NEAR(a[t], r[t] + 0.9 * v[t + 1] - v[t], 1e-15);
}

TEST(Gae, ZeroValuesUnitDiscountIsSuffixSum) {
  const std::vector<double> r{1.0, 2.0, 3.0};
  EXPECT_EQ(compute_gae(r, std::vector<double>(4, 0.0), 1.0, 1.0), (std::vector<double>{6, 5, 3}));
}

TEST(Gae, HandCaseMatchesDoubleSum) {
  const std::vector<double> r{1.0, 0.5};
  const std::vector<double> v{0.2, 0.1, 0.0};
  const auto a = compute_gae(r, v, 0.99, 0.95);
  // delta_1 = 0.5 - 0.1 = 0.4; delta_0 = 1 + 0.099 - 0.2 = 0.899.
  EXPECT_NEAR(a[1], 0.4, 1e-12);
  EXPECT_NEAR(a[0], 0.899 + 0.99 * 0.95 * 0.4, 1e-12);
  const auto oracle = gae_oracle(r, v, 0.99, 0.95);
  for (std::size_t t = 0; t < 2; ++t) EXPECT_NEAR(a[t], oracle[t], 1e-12);
  EXPECT_THROW(compute_gae(r, std::vector<double>{0.0, 0.0}, 0.99, 0.95), InvariantError);
}

TEST(Gae, RandomSequencesMatchOracle) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    const std::size_t T = 1 + rng() % 10;
    const auto r = scout::testing::random_vector(rng, T, -2, 2);
    auto v = scout::testing::random_vector(rng, T + 1, -2, 2);
    v.back() = 0.0;
    const auto a = compute_gae(r, v, 0.99, 0.95);
    const auto o = gae_oracle(r, v, 0.99, 0.95);
    for (std::size_t t = 0; t < T; ++t) EXPECT_NEAR(a[t], o[t], 1e-10);
  }
}

TEST(Ratio, Examples) {
  EXPECT_EQ(sequence_ratio(-1.3, -1.3), 1.0);
  EXPECT_NEAR(sequence_ratio(std::log(2.0), 0.0), 2.0, 1e-15);
  const double per_token = sequence_ratio(std::log(1.1), 0.0) * sequence_ratio(std::log(0.9), 0.0);
  EXPECT_NEAR(per_token, 0.99, 1e-12);
  EXPECT_NEAR(sequence_ratio(std::log(1.1) + std::log(0.9), 0.0), per_token, 1e-12);
}

TEST(Ratio, OverflowIsClampedAndCounted) {
  std::int64_t overflow = 0;
  EXPECT_EQ(sequence_ratio(50.0, 0.0, &overflow), std::exp(kMaxLogRatio));
  EXPECT_EQ(overflow, 1);
  EXPECT_THROW(sequence_ratio(NAN, 0.0), NumericError);
}

TEST(ActorLoss, UnitRatiosGiveMeanAdvantage) {
  const std::vector<double> w{1, 1, 1};
  const std::vector<double> a{0.5, -1.0, 2.0};
  const std::vector<double> kl{0.1, 0.0, -0.04};
  const ActorLoss l = actor_loss(w, a, 0.1, 0.2, 0.001, kl);
  EXPECT_NEAR(l.loss, -0.5 + 0.001 * 0.02, 1e-15);
  EXPECT_EQ(l.clip_fraction, 0.0);
}

TEST(ActorLoss, SixSignRegionCases) {
  const double el = 0.1;
  const double eh = 0.2;
  struct Case {
    double w;
    double a;
    bool clipped;
  };
  const std::vector<Case> cases{
      {1.0 + 2 * eh, 1.0, true},    // A > 0, above the band
      {1.05, 1.0, false},           // A > 0, inside
      {1.0 - 2 * el, 1.0, false},   // A > 0, below: min picks w A
      {1.0 - 2 * el, -1.0, true},   // A < 0, below the band
      {0.95, -1.0, false},          // A < 0, inside
      {1.0 + 2 * eh, -1.0, false},  // A < 0, above: min picks w A
  };
  for (const Case& c : cases) {
    const ActorLoss l = actor_loss(std::vector<double>{c.w}, std::vector<double>{c.a}, el, eh, 0.0, {});
    EXPECT_EQ(l.clipped[0], c.clipped) << c.w << ' ' << c.a;
    if (c.clipped) {
      EXPECT_EQ(l.grad_log_ratio[0], 0.0);
    } else {
      EXPECT_DOUBLE_EQ(l.grad_log_ratio[0], -c.a * c.w);
    }
  }
}

TEST(ActorLoss, ZeroAdvantageAndNoKlIsZero) {
  const ActorLoss l = actor_loss(std::vector<double>{0.5, 1.7}, std::vector<double>{0.0, 0.0}, 0.1, 0.2, 0.0,
                                 std::vector<double>{0.3, -0.2});
  EXPECT_EQ(l.loss, 0.0);
  for (double g : l.grad_log_ratio) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(l.grad_kl, 0.0);
}

TEST(ActorLoss, GradientMatchesFiniteDifferencesInLogRatio) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto logw = scout::testing::random_vector(rng, 6, -0.5, 0.5);
    const auto a = scout::testing::random_vector(rng, 6, -2, 2);
    auto f = [&] {
      std::vector<double> w;
      for (double x : logw) w.push_back(std::exp(x));
      return actor_loss(w, a, 0.1, 0.2, 0.0, {}).loss;
    };
    std::vector<double> w;
    for (double x : logw) w.push_back(std::exp(x));
    const ActorLoss l = actor_loss(w, a, 0.1, 0.2, 0.0, {});
    EXPECT_LE(scout::testing::gradient_error(logw, f, l.grad_log_ratio, 1e-7), 1e-4);
  }
}

TEST(CriticLoss, Examples) {
  EXPECT_EQ(critic_loss(std::vector<double>{1, 2}, std::vector<double>{1, 2}).loss, 0.0);
  const CriticLoss l = critic_loss(std::vector<double>{0}, std::vector<double>{2});
  EXPECT_EQ(l.loss, 4.0);
  EXPECT_EQ(l.grad_values[0], -4.0);
  std::mt19937_64 rng(3);
  auto v = scout::testing::random_vector(rng, 7);
  const auto t = scout::testing::random_vector(rng, 7);
  const CriticLoss c = critic_loss(v, t);
  EXPECT_LE(scout::testing::gradient_error(v, [&] { return critic_loss(v, t).loss; }, c.grad_values), 1e-4);
}

TEST(Rewards, OutcomeOnlyPreservesSum) {
  const std::vector<double> r{1.5, -0.5, 2.25, 0.0};
  const auto o = outcome_only(r);
  EXPECT_EQ(o, (std::vector<double>{0, 0, 0, 3.25}));
}

TEST(Collect, DeterministicAcrossThreadCounts) {
  const Fixture fx;
  const nn::ParamSet actor = make_actor(fx.spec, 1);
  const nn::ParamSet critic = make_critic(fx.spec, 2);
  const std::vector<QueryId> qs{0, 1, 2, 3, 4, 5};
  const auto a = collect_batch(fx.corpus, fx.env, fx.spec, actor, &critic, qs, 77, 1.0, 1);
  const auto b = collect_batch(fx.corpus, fx.env, fx.spec, actor, &critic, qs, 77, 1.0, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].length(), b[i].length());
    EXPECT_GE(a[i].length(), 1u);
    EXPECT_LE(a[i].length(), static_cast<std::size_t>(fx.env.max_turns));
    for (std::size_t t = 0; t < a[i].length(); ++t) {
      EXPECT_EQ(a[i].turns[t].sample.tokens, b[i].turns[t].sample.tokens);
      EXPECT_EQ(a[i].turns[t].reward, b[i].turns[t].reward);
      EXPECT_EQ(a[i].turns[t].value, b[i].turns[t].value);
      EXPECT_TRUE(std::isfinite(a[i].turns[t].reward));
    }
  }
  EXPECT_THROW(collect_batch(fx.corpus, fx.env, fx.spec, actor, &critic, std::vector<QueryId>{}, 1), InvariantError);
}

TEST(Collect, StagnationOnlyEpisodeTerminates) {
  const Fixture fx;
  nn::ParamSet actor = make_actor(fx.spec, 1);
  actor.block("b2")[fx.spec.end_token()] = 1e6;  // never calls a tool
  EnvConfig env = fx.env;
  env.max_turns = 50;
  const auto t = collect_batch(fx.corpus, env, fx.spec, actor, nullptr, std::vector<QueryId>{0}, 5);
  EXPECT_EQ(t[0].length(), 3u);
  EXPECT_EQ(t[0].reason, TerminalReason::Stagnation);
}

TEST(Collect, EpisodeAbortCarriesContext) {
  const Fixture fx;
  const nn::ParamSet actor = make_actor(fx.spec, 1);
  EnvConfig env = fx.env;
  env.max_calls = 1;  // the policy may emit two calls per turn
  try {
    collect_batch(fx.corpus, env, fx.spec, actor, nullptr, std::vector<QueryId>{0, 1, 2, 3, 4, 5, 6, 7}, 5);
    FAIL() << "expected EpisodeAbort";
  } catch (const EpisodeAbort& e) {
    EXPECT_NE(std::string(e.what()).find("query"), std::string::npos);
  }
}

TEST(Replay, PspoAndStarShareTotalReward) {
  const Fixture fx;
  const nn::ParamSet actor = make_actor(fx.spec, 3);
  const auto batch = collect_batch(fx.corpus, fx.env, fx.spec, actor, nullptr, std::vector<QueryId>{0, 1, 2, 3}, 9);
  for (const Trajectory& t : batch) {
    const auto dense = training_rewards(t, Algorithm::Pspo);
    const auto sparse = training_rewards(t, Algorithm::PspoStar);
    EXPECT_NEAR(std::accumulate(dense.begin(), dense.end(), 0.0), std::accumulate(sparse.begin(), sparse.end(), 0.0),
                1e-12);
    // Replaying the recorded calls reproduces the rewards.
    Environment env(fx.corpus, fx.env);
    env.reset(t.query, 0);
    for (const TurnRecord& r : t.turns) EXPECT_EQ(env.step(r.sample.calls).reward, r.reward);
  }
}

TEST(GroupAdvantages, CenteredPerGroup) {
  std::vector<Trajectory> batch(4);
  const double totals[] = {1.0, 3.0, 10.0, 0.0};
  for (std::size_t i = 0; i < 4; ++i) {
    batch[i].turns.resize(1);
    batch[i].turns[0].reward = totals[i];
  }
  EXPECT_EQ(group_advantages(batch, 2), (std::vector<double>{-1, 1, 5, -5}));
}

TEST(ActorObjective, FullLossGradientMatchesFiniteDifferences) {
  const Fixture fx;
  for (Algorithm algo : {Algorithm::Pspo, Algorithm::PpoToken, Algorithm::Gspo, Algorithm::PspoStar}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      TrainConfig cfg = fx.config(algo);
      nn::ParamSet actor = make_actor(fx.spec, 10 + seed);
      ASSERT_LE(actor.size(), 1000u);
      const auto batch =
          collect_batch(fx.corpus, fx.env, fx.spec, actor, nullptr, std::vector<QueryId>{0, 1, 2, 3}, seed);
      // Move off the sampling parameters so ratios differ from 1.
      std::mt19937_64 rng(seed);
      for (double& v : actor.values) v += 0.05 * std::normal_distribution<double>(0.0, 1.0)(rng);
      std::vector<double> adv;
      for (std::size_t i = 0; i < 64; ++i) adv.push_back(std::normal_distribution<double>(0.0, 1.0)(rng));
      const std::function<double(const TurnRef&)> advantage = [&](const TurnRef& r) {
        return adv[(r.traj * 13 + r.turn) % adv.size()];
      };
      const auto refs = all_turns(batch);
      nn::ParamSet g = actor.zeros_like();
      actor_objective(actor, fx.spec, cfg, batch, refs, advantage, g);
      auto loss = [&] {
        nn::ParamSet scratch = actor.zeros_like();
        return actor_objective(actor, fx.spec, cfg, batch, refs, advantage, scratch).loss;
      };
      EXPECT_LE(scout::testing::gradient_error(actor.values, loss, g.values), 1e-4) << to_string(algo) << " " << seed;
    }
  }
}

TEST(CriticObjective, FullLossGradientMatchesFiniteDifferences) {
  const Fixture fx;
  const nn::ParamSet actor = make_actor(fx.spec, 1);
  nn::ParamSet critic = make_critic(fx.spec, 2);
  const auto batch =
      collect_batch(fx.corpus, fx.env, fx.spec, actor, &critic, std::vector<QueryId>{0, 1, 2, 3}, 3);
  RunningStats stats;
  const BatchTargets bt = batch_targets(batch, Algorithm::Pspo, 0.99, 0.95, stats);
  const auto refs = all_turns(batch);
  nn::ParamSet g = critic.zeros_like();
  critic_objective(critic, batch, refs, bt.targets, &g);
  auto loss = [&] { return critic_objective(critic, batch, refs, bt.targets, nullptr); };
  EXPECT_LE(scout::testing::gradient_error(critic.values, loss, g.values), 1e-4);
}

TEST(BatchTargets, UsesDenormalizedValuesAndZeroTerminal) {
  Trajectory t;
  t.turns.resize(2);
  t.turns[0].reward = 1.0;
  t.turns[1].reward = 3.0;
  t.turns[0].value = 0.5;
  t.turns[1].value = -0.5;
  RunningStats stats;
  const BatchTargets bt = batch_targets({t}, Algorithm::Pspo, 1.0, 1.0, stats);
  // returns [4, 3]: mean 3.5, population sd 0.5.
  EXPECT_NEAR(bt.targets[0][0], 1.0, 1e-6);
  EXPECT_NEAR(bt.targets[0][1], -1.0, 1e-6);
  const double v0 = 0.5 * 0.5 + 3.5;
  EXPECT_NEAR(bt.advantages[0][0], 4.0 - v0, 1e-6);
}

TEST(Pretrain, ZeroStepsLeaveCriticUnchanged) {
  const Fixture fx;
  TrainConfig cfg = fx.config(Algorithm::Pspo);
  TrainerState st = init_trainer(fx.spec, cfg);
  const nn::ParamSet before = st.critic;
  const auto r = value_pretrain(fx.corpus, fx.env, fx.spec, st.actor, st.critic, st.critic_opt, st.return_stats, 0, cfg);
  EXPECT_TRUE(r.losses.empty());
  EXPECT_EQ(st.critic, before);
}

TEST(Pretrain, FreezesActorAndReducesLoss) {
  const Fixture fx;
  TrainConfig cfg = fx.config(Algorithm::Pspo);
  cfg.pretrain_steps = 100;
  TrainerState st = init_trainer(fx.spec, cfg);
  const auto sum = nn::checksum(st.actor);
  const auto r = value_pretrain(fx.corpus, fx.env, fx.spec, st.actor, st.critic, st.critic_opt, st.return_stats,
                                cfg.pretrain_steps, cfg);
  EXPECT_EQ(nn::checksum(st.actor), sum);
  ASSERT_EQ(r.losses.size(), 100u);
  double tail = 0.0;
  for (std::size_t i = 90; i < 100; ++i) tail += r.losses[i] / 10.0;
  EXPECT_LT(tail, r.losses.front());
}

TEST(Train, ZeroStepsReturnsInitialParams) {
  const Fixture fx;
  TrainConfig cfg = fx.config(Algorithm::Pspo);
  cfg.total_steps = 0;
  const TrainResult r = train(fx.corpus, fx.env, fx.spec, cfg);
  EXPECT_TRUE(r.metrics.empty());
  EXPECT_EQ(r.state.actor, make_actor(fx.spec, mix_seed(cfg.seed, 11)));
  EXPECT_EQ(r.state.critic, make_critic(fx.spec, mix_seed(cfg.seed, 12)));
}

TEST(Train, EveryAlgorithmRunsAndIsDeterministic) {
  const Fixture fx;
  for (Algorithm algo : {Algorithm::Pspo, Algorithm::PpoToken, Algorithm::Gspo, Algorithm::PspoStar}) {
    TrainConfig cfg = fx.config(algo);
    cfg.update_epochs = 2;
    cfg.minibatches = 2;
    const TrainResult a = train(fx.corpus, fx.env, fx.spec, cfg);
    const TrainResult b = train(fx.corpus, fx.env, fx.spec, cfg);
    ASSERT_EQ(a.metrics.size(), 3u);
    EXPECT_EQ(a.metrics, b.metrics);
    EXPECT_EQ(a.state.actor, b.state.actor);
    EXPECT_EQ(a.actor_checksum_before_pretrain, a.actor_checksum_after_pretrain);
    for (const MetricsRow& m : a.metrics) {
      EXPECT_EQ(m.algorithm, to_string(algo));
      EXPECT_TRUE(std::isfinite(m.mean_return));
      EXPECT_EQ(m.wall_ms, 0.0);
      if (algo == Algorithm::Gspo) {
        EXPECT_EQ(m.critic_loss, 0.0);
      }
    }
    EXPECT_NE(a.state.actor, make_actor(fx.spec, mix_seed(cfg.seed, 11)));
  }
}

TEST(TrainConfig, ValidationAndParsing) {
  TrainConfig c;
  c.gamma = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.eps_low = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.algorithm = Algorithm::Gspo;
  c.episodes_per_step = 12;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_algorithm("ppo_token"), Algorithm::PpoToken);
  EXPECT_EQ(to_string(parse_algorithm("pspo_star")), "pspo_star");
  EXPECT_THROW(parse_algorithm("ppo"), ConfigError);
  const TrainConfig p = TrainConfig::paper_preset();
  EXPECT_EQ(p.eps_low, 3e-4);
  EXPECT_EQ(p.eps_high, 4e-4);
  EXPECT_EQ(p.kl_coef, 0.001);
  EXPECT_EQ(p.gamma, 0.99);
  EXPECT_EQ(p.lambda, 0.95);
  EXPECT_EQ(p.pretrain_steps, 100);
}

TEST(MetricsCsv, RoundTrip) {
  std::vector<MetricsRow> rows{{0, "pspo", 3, 1.25, 0.5, 0.1, 0.25, -1e-5, 0.0},
                               {1, "pspo", 3, 1.0 / 3.0, 0.4, 0.05, 0.0, 2e-6, 0.0}};
  std::stringstream ss;
  write_metrics_csv(ss, rows);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), kMetricsHeader);
  EXPECT_EQ(read_metrics_csv(ss), rows);
  std::stringstream bad("step,x\n");
  EXPECT_THROW(read_metrics_csv(bad), FormatError);
}
