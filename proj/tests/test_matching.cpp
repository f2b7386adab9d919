#include <algorithm>
#include <numeric>

#include "inkauth/errors.hpp"
#include "inkauth/matching.hpp"
#include "test_util.hpp"

namespace inkauth {
namespace {

double active_sum(const WeightVector& w) {
  double s = 0.0;
  for (int i = 0; i < w.size(); ++i)
    if (w.active[i]) s += w.w[i];
  return s;
}

MatchingConfig hand_config(int steps, int boost, double alpha) {
  MatchingConfig c;
  c.steps = steps;
  c.boost_count = boost;
  c.alpha = alpha;
  return c;
}

TEST(InitWeights, UniformAndActive) {
  const WeightVector w = init_weights(64);
  EXPECT_EQ(w.active_count(), 64);
  for (double v : w.w) EXPECT_EQ(v, 1.0 / 64);
  EXPECT_THROW(init_weights(0), RangeError);
}

TEST(BoostStep, SingleIncrementHandExample) {
  const WeightVector w = boost_step(init_weights(4), {5.0, 1.0, 2.0, 3.0}, hand_config(1, 1, 0.5));
  EXPECT_NEAR(w.w[0], 0.5, 1e-15);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(w.w[i], 1.0 / 6.0, 1e-15);
}

TEST(BoostStep, TwoIncrementsHandExample) {
  // 0.25 -> (0.5/1.25 = 0.4) -> (0.65/1.25 = 0.52); others 0.2 -> 0.16.
  const WeightVector w = boost_step(init_weights(4), {0.0, 0.0, 9.0, 0.0}, hand_config(2, 1, 0.5));
  EXPECT_NEAR(w.w[2], 0.52, 1e-15);
  EXPECT_NEAR(w.w[0], 0.16, 1e-15);
}

TEST(BoostStep, TiesGoToLowerIndex) {
  const WeightVector w = boost_step(init_weights(4), {1.0, 2.0, 2.0, 2.0}, hand_config(1, 2, 0.5));
  EXPECT_GT(w.w[1], w.w[3]);
  EXPECT_GT(w.w[2], w.w[3]);
  EXPECT_EQ(w.w[3], w.w[0]);
}

TEST(BoostStep, InactivePatchesStayZero) {
  WeightVector w = init_weights(4);
  w.active[0] = false;
  renormalize(w);
  const WeightVector b = boost_step(w, {100.0, 1.0, 2.0, 3.0}, hand_config(3, 1, 0.3));
  EXPECT_EQ(b.w[0], 0.0);
  EXPECT_GT(b.w[3], b.w[2]);
  EXPECT_NEAR(active_sum(b), 1.0, 1e-15);
}

TEST(BoostStep, DefaultAlphaRoughlyDoublesUniformWeight) {
  const MatchingConfig c;
  std::vector<double> s(64, 0.0);
  for (int i = 0; i < c.boost_count; ++i) s[i] = 1.0;
  const WeightVector w = boost_step(init_weights(64), s, c);
  EXPECT_NEAR(w.w[0] * 64.0, 2.0, 0.05);
}

TEST(PruneStep, FloorOfOne) {
  MatchingConfig c;
  c.floor = 1;
  const WeightVector w = prune_step(init_weights(4), {0.0, 0.01, 0.5, 0.5}, c);
  EXPECT_EQ(w.active, (std::vector<bool>{false, false, true, true}));
  EXPECT_NEAR(w.w[2], 0.5, 1e-15);
  EXPECT_EQ(w.w[0], 0.0);
}

TEST(PruneStep, FloorOfThreePrunesLowestFirst) {
  MatchingConfig c;
  c.floor = 3;
  const WeightVector w = prune_step(init_weights(4), {0.01, 0.0, 0.5, 0.5}, c);
  EXPECT_EQ(w.active, (std::vector<bool>{true, false, true, true}));
  EXPECT_NEAR(w.w[0], 1.0 / 3.0, 1e-15);
}

TEST(PruneStep, NothingBelowThresholdKeepsAll) {
  MatchingConfig c;
  c.floor = 1;
  const WeightVector w = prune_step(init_weights(4), {0.1, 0.2, 0.3, 0.4}, c);
  EXPECT_EQ(w.active_count(), 4);
}

TEST(Matching, RandomizedInvariants) {
  Rng rng(123);
  for (int trial = 0; trial < 10000; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 80);
    MatchingConfig c;
    c.steps = 1 + static_cast<int>(rng() % 4);
    c.boost_count = 1 + static_cast<int>(rng() % 12);
    c.alpha = uniform(rng, 0.0, 1.0);
    c.floor = 1 + static_cast<int>(rng() % 30);
    WeightVector w = init_weights(m);
    for (int i = 0; i < m; ++i) {
      w.w[i] = uniform(rng);
      w.active[i] = uniform(rng) < 0.8;
    }
    if (w.active_count() == 0) w.active[0] = true;
    renormalize(w);
    std::vector<double> sal(m), ch(m);
    for (int i = 0; i < m; ++i) {
      sal[i] = uniform(rng);
      ch[i] = uniform(rng);
    }
    const WeightVector b = boost_step(w, sal, c);
    ASSERT_EQ(b.active, w.active);
    ASSERT_NEAR(active_sum(b), 1.0, 1e-12);
    const WeightVector p = prune_step(b, ch, c);
    ASSERT_NEAR(active_sum(p), 1.0, 1e-12);
    ASSERT_GE(p.active_count(), std::min(c.floor, b.active_count()));
    for (int i = 0; i < m; ++i) {
      ASSERT_GE(p.w[i], 0.0);
      if (!b.active[i]) ASSERT_FALSE(p.active[i]);
      if (!p.active[i]) ASSERT_EQ(p.w[i], 0.0);
    }
  }
}

TEST(Matching, RoundCountOverIterations) {
  const MatchingConfig c;
  int rounds = 0;
  for (int it = 1; it <= 35; ++it) rounds += is_matching_iteration(it, c);
  EXPECT_EQ(rounds, 3);
  EXPECT_FALSE(is_matching_iteration(0, c));
}

TEST(Matching, ZeroMaxRoundsIsNoOp) {
  MatchingConfig c;
  c.max_rounds = 0;
  MatchingState s = init_matching(8);
  EXPECT_FALSE(matching_round(s, std::vector<double>(8, 1.0), c));
  EXPECT_EQ(s.weights.w, init_weights(8).w);
  EXPECT_EQ(s.rounds, 0);
}

TEST(Matching, MaxRoundsCapsRounds) {
  MatchingConfig c;
  c.max_rounds = 2;
  c.floor = 64;
  MatchingState s = init_matching(64);
  std::vector<double> sal(64);
  std::iota(sal.begin(), sal.end(), 0.0);
  int done = 0;
  for (int r = 0; r < 5; ++r) done += matching_round(s, sal, c);
  EXPECT_EQ(done, 2);
}

TEST(Matching, EarlyStopAfterStreak) {
  MatchingConfig c;
  c.floor = 2;
  c.boost_count = 8;
  c.max_rounds = 100;
  MatchingState s = init_matching(8);
  std::vector<double> sal(8, 1.0);
  int done = 0;
  while (matching_round(s, sal, c)) ++done;
  EXPECT_TRUE(s.halted);
  EXPECT_EQ(done, 2);
}

TEST(Matching, AccumulatedSaliencyAveragesAndClears) {
  MatchingConfig c = hand_config(1, 1, 0.5);
  MatchingState s = init_matching(4);
  EXPECT_FALSE(matching_round_from_accumulated(s, c));
  accumulate_saliency(s, {0.0, 4.0, 0.0, 0.0});
  accumulate_saliency(s, {3.0, 0.0, 0.0, 0.0});
  EXPECT_TRUE(matching_round_from_accumulated(s, c));
  EXPECT_GT(s.weights.w[1], s.weights.w[0]);  // mean 2.0 beats 1.5
  EXPECT_EQ(s.saliency_samples, 0);
  EXPECT_EQ(s.saliency_sum, std::vector<double>(4, 0.0));
  EXPECT_THROW(accumulate_saliency(s, {1.0}), ShapeError);
}

TEST(Saliency, MeanOfRowNorms) {
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 3.0, 4.0, 0.0, 1.0;
  b << 0.0, 0.0, 0.0, 3.0;
  const auto s = patch_saliency({a, b});
  EXPECT_NEAR(s[0], 2.5, 1e-15);
  EXPECT_NEAR(s[1], 2.0, 1e-15);
  EXPECT_THROW(patch_saliency({}), StateError);
}

// Energy E = sum_i (M w_i x_i)^2; saliency |dE/dz_i| = 2 M w_i x_i^2 favours the
// planted high-signal patches, and matching should concentrate weight on them.
TEST(Matching, PlantedSignalWins) {
  const int m = 64;
  MatchingConfig c;
  Rng rng(5);
  std::vector<double> x(m);
  std::vector<int> planted;
  for (int i = 0; i < m; ++i) x[i] = uniform(rng, 0.05, 0.2);
  for (int k = 0; k < c.boost_count; ++k) {
    const int i = 3 + 6 * k;
    x[i] = 1.0;
    planted.push_back(i);
  }
  MatchingState s = init_matching(m);
  for (int r = 0; r < c.max_rounds; ++r) {
    std::vector<double> sal(m);
    for (int i = 0; i < m; ++i) sal[i] = 2.0 * m * s.weights.w[i] * x[i] * x[i];
    matching_round(s, sal, c);
  }
  double min_planted = 1.0, max_other = 0.0;
  for (int i = 0; i < m; ++i) {
    const bool p = std::find(planted.begin(), planted.end(), i) != planted.end();
    if (p) {
      EXPECT_TRUE(s.weights.active[i]);
      min_planted = std::min(min_planted, s.weights.w[i]);
    } else {
      max_other = std::max(max_other, s.weights.w[i]);
    }
  }
  EXPECT_GT(min_planted, max_other);
  EXPECT_GE(s.weights.active_count(), c.floor);
}

TEST(MatchingConfig, Validation) {
  MatchingConfig c;
  c.steps = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c = MatchingConfig{};
  c.alpha = -1.0;
  EXPECT_THROW(validate(c), RangeError);
}

}  // namespace
}  // namespace inkauth
