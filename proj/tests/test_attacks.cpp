#include "frl/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "gtest/gtest.h"

#include "frl/errors.hpp"

namespace frl {
namespace {

Ranking R(std::vector<EdgeId> order) { return Ranking(std::move(order)); }

Ranking RandomRanking(std::size_t n, std::mt19937_64& rng, std::size_t layer = 0) {
  std::vector<EdgeId> order(n);
  std::iota(order.begin(), order.end(), EdgeId{0});
  std::shuffle(order.begin(), order.end(), rng);
  return Ranking(std::move(order), layer);
}

TEST(UpdateTargetTest, ExactHitStarts) {
  AttackState s;
  s.tau = 0.7;
  const ModelRanking g{R({1, 0})};
  s = UpdateTarget(s, g, 0.7);
  EXPECT_TRUE(s.started);
  EXPECT_EQ(s.epsilon, 0.0);
  EXPECT_EQ(s.target, g);
}

TEST(UpdateTargetTest, BelowTriggerUnchanged) {
  AttackState s;
  s.tau = 0.7;
  s = UpdateTarget(s, {R({1, 0})}, 0.69);
  EXPECT_FALSE(s.started);
  EXPECT_TRUE(s.target.empty());
}

TEST(UpdateTargetTest, CloserGlobalReplacesTarget) {
  AttackState s;
  s.tau = 0.5;
  s.started = true;
  s.epsilon = 0.02;
  s.target = {R({0, 1})};
  s = UpdateTarget(s, {R({1, 0})}, 0.51);
  EXPECT_NEAR(s.epsilon, 0.01, 1e-12);
  EXPECT_EQ(s.target, ModelRanking{R({1, 0})});
  s = UpdateTarget(s, {R({0, 1})}, 0.45);
  EXPECT_EQ(s.target, ModelRanking{R({1, 0})});
}

TEST(UpdateTargetTest, EpsilonNonIncreasing) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> acc(0.0, 1.0);
  AttackState s;
  s.tau = 0.6;
  double last = 2.0;
  for (int t = 0; t < 500; ++t) {
    const double a = acc(rng);
    s = UpdateTarget(s, {R({0, 1})}, a);
    if (s.started) {
      EXPECT_LE(s.epsilon, last);
      last = s.epsilon;
    }
  }
}

TEST(EstimateBenignTest, Modes) {
  const ModelRanking r{R({2, 0, 1})};
  EXPECT_EQ(EstimateBenign(Estimation::kHistorical, r, {}), r);
  const std::vector<ModelRanking> one{r};
  EXPECT_EQ(EstimateBenign(Estimation::kAlternative, std::nullopt, one), r);
  const std::vector<ModelRanking> two{{R({0, 4, 2, 3, 5, 1})}, {R({0, 1, 2, 5, 4, 3})}};
  EXPECT_EQ(EstimateBenign(Estimation::kAlternative, std::nullopt, two),
            ModelRanking{R({0, 2, 4, 1, 5, 3})});
  EXPECT_THROW(EstimateBenign(Estimation::kHistorical, std::nullopt, one), ParameterError);
  EXPECT_THROW(EstimateBenign(Estimation::kAlternative, r, {}), ParameterError);
}

TEST(IdentifyEdgesTest, Examples) {
  EdgeSets s = IdentifyEdges(R({0, 1, 2, 3}), R({0, 2, 1, 3}), 0.5);
  EXPECT_EQ(s.ascending, (std::vector<EdgeId>{1}));
  EXPECT_EQ(s.descending, (std::vector<EdgeId>{2}));
  s = IdentifyEdges(R({3, 1, 0, 2}), R({3, 1, 0, 2}), 0.5);
  EXPECT_TRUE(s.ascending.empty());
  EXPECT_TRUE(s.descending.empty());
  s = IdentifyEdges(R({0, 1, 2, 3}), R({2, 3, 0, 1}), 0.5);
  EXPECT_EQ(s.ascending.size(), 2u);
  EXPECT_EQ(s.descending.size(), 2u);
  EXPECT_THROW(IdentifyEdges(R({0, 1}), R({0, 1, 2}), 0.5), ValidationError);
}

TEST(IdentifyEdgesTest, SetsAreDisjointAndBalanced) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 40;
    const double k = 0.1 * (1 + trial % 10);
    const EdgeSets s = IdentifyEdges(RandomRanking(n, rng), RandomRanking(n, rng), k);
    EXPECT_EQ(s.ascending.size(), s.descending.size());
    for (EdgeId e : s.ascending) {
      EXPECT_FALSE(std::binary_search(s.descending.begin(), s.descending.end(), e));
    }
  }
}

TEST(ManipulateTest, Examples) {
  EXPECT_EQ(ManipulateAeDe(R({0, 2, 1, 3}), {{1}, {2}}), R({1, 0, 3, 2}));
  EXPECT_EQ(ManipulateAeDe(R({0, 2, 1, 3}), {}), R({0, 2, 1, 3}));
  EXPECT_EQ(ManipulateAeDe(R({0, 1, 2, 3, 4, 5}), {{5}, {0}}), R({5, 1, 2, 3, 4, 0}));
  EXPECT_THROW(ManipulateAeDe(R({0, 1, 2}), {{7}, {}}), ValidationError);
  EXPECT_THROW(ManipulateAeDe(R({0, 1, 2}), {{1}, {1}}), ValidationError);
}

TEST(ManipulateTest, PlacesTargetMaskOnChangedEdges) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 4 + trial % 60;
    const double k = 0.25 * (1 + trial % 4);
    const Ranking target = RandomRanking(n, rng);
    const Ranking bar = RandomRanking(n, rng);
    const EdgeSets s = IdentifyEdges(target, bar, k);
    const Ranking out = ManipulateAeDe(bar, s);
    const SuperMask m = MaskFromRanking(out, k);
    const SuperMask want = MaskFromRanking(target, k);
    for (EdgeId e : s.ascending) EXPECT_EQ(m.selected(e), want.selected(e));
    for (EdgeId e : s.descending) EXPECT_EQ(m.selected(e), want.selected(e));
    // Full mask matches the target as well, since the remaining edges agree.
    EXPECT_EQ(m, want);
  }
}

TEST(InternalReverseTest, Examples) {
  EXPECT_EQ(InternalReverse(R({7, 0, 1, 2, 3, 4, 5, 6}), {{7}, {6}}, 0.5),
            R({7, 2, 1, 0, 5, 4, 3, 6}));
  EXPECT_EQ(InternalReverse(R({1, 0, 3, 2}), {{1}, {2}}, 0.5), R({1, 0, 3, 2}));
}

TEST(InternalReverseTest, RejectsBrokenPreconditions) {
  EXPECT_THROW(InternalReverse(R({0, 1, 2, 3}), {{1}, {}}, 0.5), ValidationError);
  EXPECT_THROW(InternalReverse(R({0, 1, 2, 3}), {{}, {0}}, 0.5), ValidationError);
  EXPECT_THROW(InternalReverse(R({0, 1, 2, 3}), {{0, 1, 2}, {}}, 0.5), ValidationError);
}

TEST(InternalReverseTest, PreservesMaskOnRandomInputs) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + trial % 50;
    const double k = 0.25 * (1 + trial % 4);
    const Ranking target = RandomRanking(n, rng);
    const Ranking bar = RandomRanking(n, rng);
    const EdgeSets s = IdentifyEdges(target, bar, k);
    const Ranking prime = ManipulateAeDe(bar, s);
    EXPECT_EQ(MaskFromRanking(InternalReverse(prime, s, k), k), MaskFromRanking(prime, k));
  }
}

TEST(EcaRoundTest, NotStartedPassesLocalsThrough) {
  AttackState s;
  s.tau = 0.9;
  EcaInputs in;
  in.global = {R({0, 1, 2, 3})};
  in.accuracy = 0.5;
  in.malicious_locals = {{R({3, 2, 1, 0})}, {R({0, 2, 1, 3})}};
  const EcaOutput out = EcaRound(s, in);
  EXPECT_FALSE(out.active);
  EXPECT_EQ(out.rankings, in.malicious_locals);
  EXPECT_FALSE(out.state.started);
  EXPECT_EQ(*out.state.history, in.global);
}

TEST(EcaRoundTest, PipelineOnSmallExample) {
  AttackState s;
  s.tau = 0.7;
  s.started = true;
  s.epsilon = 0.0;
  s.target = {R({0, 1, 2, 3})};
  EcaInputs in;
  in.global = {R({0, 2, 1, 3})};
  in.accuracy = 0.2;
  in.malicious_locals = {{R({0, 1, 2, 3})}, {R({0, 1, 2, 3})}, {R({0, 1, 2, 3})}};
  const EcaOutput out = EcaRound(s, in);
  EXPECT_TRUE(out.active);
  ASSERT_EQ(out.rankings.size(), 3u);
  for (const auto& r : out.rankings) EXPECT_EQ(r, ModelRanking{R({1, 0, 3, 2})});
}

TEST(EcaRoundTest, SameTargetReversesSegments) {
  AttackState s;
  s.tau = 0.5;
  s.started = true;
  s.epsilon = 0.0;
  const Ranking r = R({4, 1, 0, 5, 2, 3});
  s.target = {r};
  EcaInputs in;
  in.global = {r};
  in.accuracy = 0.9;
  in.malicious_locals = {{r}};
  const EcaOutput out = EcaRound(s, in);
  EXPECT_EQ(out.rankings[0][0], R({0, 1, 4, 3, 2, 5}));
  EXPECT_EQ(MaskFromRanking(out.rankings[0][0], 0.5), MaskFromRanking(r, 0.5));
  in.internal_reverse = false;
  EXPECT_EQ(EcaRound(s, in).rankings[0][0], r);
}

TEST(EcaRoundTest, AlternativeEstimationUsesLocals) {
  AttackState s;
  s.tau = 0.5;
  s.started = true;
  s.epsilon = 0.0;
  s.target = {R({0, 1, 2, 3})};
  EcaInputs in;
  in.global = {R({3, 2, 1, 0})};
  in.accuracy = 0.9;
  in.estimation = Estimation::kAlternative;
  in.malicious_locals = {{R({0, 2, 1, 3})}};
  EXPECT_EQ(EcaRound(s, in).rankings[0][0], R({1, 0, 3, 2}));
}

TEST(RraRoundTest, GateAndDeterminism) {
  const std::vector<std::size_t> sizes{5, 3};
  std::mt19937_64 a(1), b(1);
  EXPECT_FALSE(RraRound(0.4, 0.5, sizes, 2, a).has_value());
  EXPECT_FALSE(RraRound(0.5, 0.5, sizes, 2, a).has_value());
  std::mt19937_64 c(2), d(2);
  const auto x = RraRound(0.6, 0.5, sizes, 3, c);
  const auto y = RraRound(0.6, 0.5, sizes, 3, d);
  ASSERT_TRUE(x.has_value());
  EXPECT_EQ(*x, *y);
  EXPECT_EQ(x->size(), 3u);
  EXPECT_EQ((*x)[0][1].layer(), 1u);
}

TEST(RraRoundTest, PositionsUniform) {
  // Chi-square of edge 0's position over 10^4 draws, n = 10 (9 dof).
  const std::vector<std::size_t> sizes{10};
  std::mt19937_64 rng(77);
  std::vector<double> counts(10, 0.0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto out = RraRound(1.0, 0.0, sizes, 1, rng);
    counts[Invert((*out)[0][0])[0]] += 1.0;
  }
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - draws / 10.0) * (c - draws / 10.0) / (draws / 10.0);
  EXPECT_LT(chi2, 21.666);  // 0.99 quantile of chi-square with 9 dof
}

}  // namespace
}  // namespace frl
