#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "scout/nn.hpp"
#include "test_support.hpp"

using namespace scout;
using namespace scout::nn;

TEST(Forward, ZeroParamsGiveZeroOutput) {
  ParamSet p;
  add_mlp_blocks(p, {4, 3, 2});
  const std::vector<double> x{1, -2, 3, 0.5};
  const Cache c = forward(p, x);
  EXPECT_EQ(c.output, (std::vector<double>{0.0, 0.0}));
}

TEST(Forward, IdentityAffineLayer) {
  ParamSet p;
  add_mlp_blocks(p, {3, 0, 3});
  auto w = p.block("w");
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  const std::vector<double> x{0.25, -1.5, 7.0};
  EXPECT_EQ(forward(p, x).output, x);
}

TEST(Forward, SeededNetIsRepeatableAndPure) {
  const ParamSet p = make_mlp({5, 7, 3}, 42);
  const ParamSet copy = p;
  const std::vector<double> x{0.1, 0.2, -0.3, 0.4, 0.5};
  const auto a = forward(p, x).output;
  const auto b = forward(make_mlp({5, 7, 3}, 42), x).output;
  EXPECT_EQ(a, b);
  EXPECT_EQ(p, copy);
}

TEST(Forward, RejectsBadInput) {
  const ParamSet p = make_mlp({3, 2, 1}, 1);
  EXPECT_THROW(forward(p, std::vector<double>{1, 2}), InvariantError);
  EXPECT_THROW(forward(p, std::vector<double>{1, NAN, 2}), NumericError);
}

TEST(Init, UniformWithinFanInBound) {
  const ParamSet p = make_mlp({16, 8, 4}, 3);
  for (double v : p.block("w1")) EXPECT_LE(std::abs(v), 1.0 / 4.0);
  for (double v : p.block("w2")) EXPECT_LE(std::abs(v), 1.0 / std::sqrt(8.0));
  EXPECT_EQ(p.size(), 16u * 8 + 8 + 8 * 4 + 4);
}

TEST(Backward, ZeroGradOutputGivesZeroGrads) {
  const ParamSet p = make_mlp({4, 5, 3}, 9);
  const std::vector<double> x{0.3, -0.1, 0.7, 0.2};
  const ParamSet g = backward(p, forward(p, x), std::vector<double>(3, 0.0));
  for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(Backward, LinearScalarGradientIsInput) {
  ParamSet p;
  add_mlp_blocks(p, {3, 0, 1});
  const std::vector<double> x{2.0, -1.0, 0.5};
  const ParamSet g = backward(p, forward(p, x), std::vector<double>{1.0});
  const auto gw = g.block("w");
  EXPECT_EQ(std::vector<double>(gw.begin(), gw.end()), x);
  EXPECT_EQ(g.block("b")[0], 1.0);
}

TEST(Backward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const MlpShape shape{6, trial % 2 == 0 ? 8u : 0u, 4};
    ParamSet p = make_mlp(shape, 100 + static_cast<std::uint64_t>(trial));
    ASSERT_LE(p.size(), 1000u);
    const auto x = scout::testing::random_vector(rng, shape.in);
    const auto go = scout::testing::random_vector(rng, shape.out);
    auto loss = [&] {
      const auto y = forward(p, x).output;
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * go[i];
      return s;
    };
    const ParamSet g = backward(p, forward(p, x), go);
    EXPECT_LE(scout::testing::gradient_error(p.values, loss, g.values), 1e-4);
  }
}

TEST(Backward, InputGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  const ParamSet p = make_mlp({5, 6, 3}, 2);
  auto x = scout::testing::random_vector(rng, 5);
  const auto go = scout::testing::random_vector(rng, 3);
  ParamSet g = p.zeros_like();
  const auto dx = backward_into(p, forward(p, x), go, g);
  auto loss = [&] {
    const auto y = forward(p, x).output;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * go[i];
    return s;
  };
  EXPECT_LE(scout::testing::gradient_error(x, loss, dx), 1e-4);
}

TEST(Adam, ZeroGradientOnlyAdvancesCounter) {
  ParamSet p = make_mlp({3, 2, 1}, 4);
  const ParamSet before = p;
  OptimizerState st = OptimizerState::for_params(p, 0.01);
  optimizer_step(p, p.zeros_like(), st);
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  ParamSet p = make_mlp({2, 0, 1}, 4);
  const ParamSet before = p;
  OptimizerState st = OptimizerState::for_params(p, 0.01);
  ParamSet g = p.zeros_like();
  g.values = {0.5, -2.0, 3.0};
  optimizer_step(p, g, st);
  // m_hat = g and v_hat = g^2 at step 1, so the step is lr * g / (|g| + eps).
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double expect = before.values[i] - 0.01 * g.values[i] / (std::abs(g.values[i]) + 1e-8);
    EXPECT_NEAR(p.values[i], expect, 1e-15);
  }
}

TEST(Adam, DeterministicAndRejectsNonFinite) {
  ParamSet a = make_mlp({3, 2, 1}, 4);
  ParamSet b = a;
  OptimizerState sa = OptimizerState::for_params(a, 0.01);
  OptimizerState sb = sa;
  ParamSet g = a.zeros_like();
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = 0.1 * static_cast<double>(i) - 0.3;
  optimizer_step(a, g, sa);
  optimizer_step(b, g, sb);
  EXPECT_EQ(a, b);
  EXPECT_EQ(sa, sb);
  g.values[0] = INFINITY;
  const ParamSet keep = a;
  const OptimizerState keep_st = sa;
  EXPECT_THROW(optimizer_step(a, g, sa), NumericError);
  EXPECT_EQ(a, keep);
  EXPECT_EQ(sa, keep_st);
}

TEST(Checkpoint, RoundTripAndChecksum) {
  const ParamSet p = make_mlp({4, 3, 2}, 77);
  std::stringstream ss;
  write_checkpoint(ss, p, 12);
  std::int64_t step = 0;
  const ParamSet back = read_checkpoint(ss, &step);
  EXPECT_EQ(back, p);
  EXPECT_EQ(step, 12);
  EXPECT_EQ(checksum(back), checksum(p));
  ParamSet q = p;
  q.values[3] = std::nextafter(q.values[3], 1.0);
  EXPECT_NE(checksum(q), checksum(p));
  EXPECT_THROW(load_checkpoint("/nonexistent/actor.ckpt"), NotFoundError);
  std::stringstream trunc("checkpoint 1 0 1\nblock w 2 2\n0.5\n");
  EXPECT_THROW(read_checkpoint(trunc), FormatError);
}
