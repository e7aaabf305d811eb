#include "frl/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "gtest/gtest.h"

#include "frl/dataset.hpp"
#include "frl/errors.hpp"

namespace frl {
namespace {

Ranking RandomRanking(std::size_t n, std::mt19937_64& rng, std::size_t layer = 0) {
  std::vector<EdgeId> order(n);
  std::iota(order.begin(), order.end(), EdgeId{0});
  std::shuffle(order.begin(), order.end(), rng);
  return Ranking(std::move(order), layer);
}

Ranking Reversed(const Ranking& r) {
  std::vector<EdgeId> order = r.order();
  std::reverse(order.begin(), order.end());
  return Ranking(std::move(order), r.layer());
}

// `swaps` random adjacent transpositions of `r`.
Ranking Jitter(const Ranking& r, int swaps, std::mt19937_64& rng) {
  std::vector<EdgeId> order = r.order();
  std::uniform_int_distribution<std::size_t> pos(0, order.size() - 2);
  for (int i = 0; i < swaps; ++i) {
    const std::size_t p = pos(rng);
    std::swap(order[p], order[p + 1]);
  }
  return Ranking(std::move(order), r.layer());
}

ModelRanking Model(std::initializer_list<Ranking> layers) { return ModelRanking(layers); }

double Cos(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Two-layer clients around a common center.
std::vector<ModelRanking> Cluster(std::size_t count, int swaps, std::mt19937_64& rng) {
  const Ranking c0 = RandomRanking(24, rng, 0);
  const Ranking c1 = RandomRanking(12, rng, 1);
  std::vector<ModelRanking> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({Jitter(c0, swaps, rng), Jitter(c1, swaps, rng)});
  }
  return out;
}

TEST(EmbedTest, ReversalIsNegation) {
  std::mt19937_64 rng(1);
  const ModelRanking r{RandomRanking(10, rng, 0), RandomRanking(7, rng, 1)};
  const ModelRanking rev{Reversed(r[0]), Reversed(r[1])};
  const auto a = Embed(r);
  const auto b = Embed(rev);
  ASSERT_EQ(a.size(), 17u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(a[i], -b[i]);
  EXPECT_NEAR(Cos(a, b), -1.0, 1e-12);
  EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 0.0, 1e-9);
}

TEST(AggregatorKindTest, NamesRoundTrip) {
  EXPECT_EQ(AllAggregatorKinds().size(), 9u);
  for (AggregatorKind k : AllAggregatorKinds()) {
    EXPECT_EQ(ParseAggregatorKind(ToString(k)), k);
  }
  EXPECT_THROW(ParseAggregatorKind("krum"), ParameterError);
}

TEST(MultiKrumTest, IdenticalClientsKeepCommonMask) {
  std::mt19937_64 rng(2);
  const ModelRanking r{RandomRanking(16, rng)};
  const std::vector<ModelRanking> rs(6, r);
  AggregatorParams p;
  p.assumed_malicious = 1;
  const AggregateResult out = AggregateMultiKrum(rs, p);
  EXPECT_EQ(MaskFromRanking(out.ranking, 0.5), MaskFromRanking(r, 0.5));
}

TEST(MultiKrumTest, ReversedClientExcluded) {
  const Ranking r({2, 0, 3, 1});
  std::vector<ModelRanking> rs(4, Model({r}));
  rs.insert(rs.begin() + 2, Model({Reversed(r)}));
  AggregatorParams p;
  p.assumed_malicious = 1;
  const AggregateResult out = AggregateMultiKrum(rs, p);
  EXPECT_TRUE(std::find(out.removed.begin(), out.removed.end(), 2u) != out.removed.end());
  EXPECT_EQ(out.ranking, Model({r}));
}

TEST(MultiKrumTest, TooFewClientsIsConfigError) {
  std::mt19937_64 rng(3);
  const std::vector<ModelRanking> rs(4, Model({RandomRanking(8, rng)}));
  AggregatorParams p;
  p.assumed_malicious = 1;
  EXPECT_THROW(AggregateMultiKrum(rs, p), ConfigError);
}

TEST(AfaTest, IdenticalClientsNoneRemoved) {
  std::mt19937_64 rng(4);
  const std::vector<ModelRanking> rs(5, Model({RandomRanking(20, rng)}));
  const AggregateResult out = AggregateAfa(rs, AggregatorParams{});
  EXPECT_TRUE(out.removed.empty());
  EXPECT_EQ(out.ranking, rs[0]);
}

TEST(AfaTest, OrthogonalOutlierRemovedInFirstPass) {
  std::mt19937_64 rng(5);
  const Ranking center = RandomRanking(200, rng);
  std::vector<ModelRanking> rs;
  for (int i = 0; i < 9; ++i) rs.push_back({Jitter(center, 5, rng)});
  // A random ranking is nearly orthogonal to the center.
  const ModelRanking outlier{RandomRanking(200, rng)};
  ASSERT_LT(std::fabs(Cos(Embed(outlier), Embed(rs[0]))), 0.2);
  rs.insert(rs.begin() + 4, outlier);
  AggregatorParams p;
  p.afa_xi_step = 1e9;  // a second pass would never remove anything
  const AggregateResult out = AggregateAfa(rs, p);
  EXPECT_EQ(out.removed, (std::vector<std::size_t>{4}));
  EXPECT_EQ(AggregateAfa(rs, p).ranking, out.ranking);
}

TEST(FabaTest, ZeroAssumedIsPlainVote) {
  std::mt19937_64 rng(6);
  const auto rs = Cluster(7, 30, rng);
  const AggregateResult out = AggregateFaba(rs, AggregatorParams{});
  EXPECT_TRUE(out.removed.empty());
  EXPECT_EQ(out.ranking, AggregateMv(rs).ranking);
}

TEST(FabaTest, ReversedRemovedAndCountExact) {
  std::mt19937_64 rng(7);
  auto rs = Cluster(8, 10, rng);
  rs.insert(rs.begin() + 3, ModelRanking{Reversed(rs[0][0]), Reversed(rs[0][1])});
  AggregatorParams p;
  p.assumed_malicious = 1;
  EXPECT_EQ(AggregateFaba(rs, p).removed, (std::vector<std::size_t>{3}));
  p.assumed_malicious = 3;
  const AggregateResult out = AggregateFaba(rs, p);
  EXPECT_EQ(out.removed.size(), 3u);
  EXPECT_TRUE(std::find(out.removed.begin(), out.removed.end(), 3u) != out.removed.end());
}

TEST(DncTest, IdenticalClientsPreserveVote) {
  std::mt19937_64 rng(8);
  const std::vector<ModelRanking> rs(6, Model({RandomRanking(30, rng)}));
  AggregatorParams p;
  p.assumed_malicious = 2;
  const AggregateResult out = AggregateDnc(rs, p);
  EXPECT_EQ(out.ranking, rs[0]);
}

TEST(DncTest, PlantedOutlierHasTopScore) {
  std::mt19937_64 rng(9);
  const Ranking center = RandomRanking(100, rng);
  std::vector<ModelRanking> rs;
  for (int i = 0; i < 20; ++i) rs.push_back({Jitter(center, 2, rng)});
  // Swap the two extreme edges of client 13: a large move along one axis pair.
  std::vector<EdgeId> order = center.order();
  std::swap(order.front(), order.back());
  rs[13] = {Ranking(order)};
  AggregatorParams p;
  p.assumed_malicious = 1;
  p.seed = 5;
  const AggregateResult out = AggregateDnc(rs, p);
  EXPECT_EQ(out.removed, (std::vector<std::size_t>{13}));
}

TEST(DncTest, SubsampleDeterministicPerSeed) {
  std::mt19937_64 rng(10);
  const auto rs = Cluster(9, 40, rng);
  AggregatorParams p;
  p.assumed_malicious = 2;
  p.dnc_subsample = 10;
  p.seed = 99;
  const AggregateResult a = AggregateDnc(rs, p);
  const AggregateResult b = AggregateDnc(rs, p);
  EXPECT_EQ(a.ranking, b.ranking);
  EXPECT_EQ(a.removed, b.removed);
  EXPECT_EQ(a.removed.size(), 2u);
}

TEST(FlTrustTest, ClientsEqualToServer) {
  std::mt19937_64 rng(11);
  const ModelRanking server{RandomRanking(20, rng)};
  const std::vector<ModelRanking> rs(4, server);
  const AggregateResult out = AggregateFlTrust(rs, server);
  EXPECT_EQ(MaskFromRanking(out.ranking, 0.5), MaskFromRanking(server, 0.5));
  EXPECT_NEAR(std::accumulate(out.weights.begin(), out.weights.end(), 0.0), 1.0, 1e-12);
}

TEST(FlTrustTest, ReversedClientGetsZeroWeight) {
  std::mt19937_64 rng(12);
  const Ranking s = RandomRanking(30, rng);
  std::vector<ModelRanking> rs;
  for (int i = 0; i < 4; ++i) rs.push_back({Jitter(s, 10, rng)});
  rs.push_back({Reversed(s)});
  const AggregateResult out = AggregateFlTrust(rs, ModelRanking{s});
  EXPECT_EQ(out.weights[4], 0.0);
  EXPECT_EQ(out.removed, (std::vector<std::size_t>{4}));
  EXPECT_NEAR(std::accumulate(out.weights.begin(), out.weights.end(), 0.0), 1.0, 1e-12);
}

TEST(FlTrustTest, AllZeroTrustFallsBackToServer) {
  std::mt19937_64 rng(13);
  const Ranking s = RandomRanking(30, rng);
  const std::vector<ModelRanking> rs(3, ModelRanking{Reversed(s)});
  const AggregateResult out = AggregateFlTrust(rs, ModelRanking{s});
  EXPECT_EQ(out.ranking, ModelRanking{s});
  EXPECT_FALSE(out.warnings.empty());
}

class FangTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const DatasetShard all = SynthDataset(51, 3, 6, 300, 4.0);
    std::vector<std::size_t> val_rows, train_rows;
    for (std::size_t r = 0; r < all.rows(); ++r) (r % 4 == 0 ? val_rows : train_rows).push_back(r);
    aux_.validation = Subset(all, val_rows);
    train_ = Subset(all, train_rows);
    net_ = InitSupernetwork(52, {6, 16, 3});
    aux_.net = &net_;
    aux_.k = 0.5;
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.learning_rate = 0.1;
    std::mt19937_64 rng(53);
    good_ = LocalTrain(train_, RankOf(net_), net_, cfg, 0.5, rng);
  }

  // Selected edges of `r` moved below the unselected ones, order kept.
  ModelRanking Demote(const ModelRanking& r) const {
    ModelRanking out;
    for (const Ranking& layer : r) {
      const std::size_t t = SelectionBoundary(layer.size(), 0.5);
      std::vector<EdgeId> order(layer.order().begin() + static_cast<std::ptrdiff_t>(t),
                                layer.order().end());
      order.insert(order.end(), layer.order().begin(),
                   layer.order().begin() + static_cast<std::ptrdiff_t>(t));
      out.emplace_back(std::move(order), layer.layer());
    }
    return out;
  }

  ServerAux aux_;
  DatasetShard train_;
  SuperNetwork net_;
  ModelRanking good_;
};

TEST_F(FangTest, IdenticalClientsRemoveLowestPositions) {
  const std::vector<ModelRanking> rs(5, good_);
  const FangImpacts imp = ComputeFangImpacts(rs, aux_);
  for (double v : imp.error) EXPECT_EQ(v, 0.0);
  for (double v : imp.loss) EXPECT_EQ(v, 0.0);
  AggregatorParams p;
  p.assumed_malicious = 2;
  const AggregateResult out = AggregateFang(rs, aux_, FangVariant::kErr, p);
  EXPECT_EQ(out.removed, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(out.ranking, good_);
}

TEST_F(FangTest, PlantedPoisonFlaggedByErr) {
  std::vector<ModelRanking> rs(4, good_);
  rs.insert(rs.begin() + 2, Demote(good_));
  const double err_all =
      1.0 - Evaluate(MvAggregate(rs).ranking, net_, aux_.validation, 0.5);
  std::vector<ModelRanking> without = rs;
  without.erase(without.begin() + 2);
  const double err_without =
      1.0 - Evaluate(MvAggregate(without).ranking, net_, aux_.validation, 0.5);
  ASSERT_LT(err_without, err_all);
  AggregatorParams p;
  p.assumed_malicious = 1;
  EXPECT_EQ(AggregateFang(rs, aux_, FangVariant::kErr, p).removed,
            (std::vector<std::size_t>{2}));
}

TEST_F(FangTest, UnionIsIntersection) {
  std::mt19937_64 rng(54);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<ModelRanking> rs;
    for (int i = 0; i < 7; ++i) {
      rs.push_back({Jitter(good_[0], 60, rng), Jitter(good_[1], 20, rng)});
    }
    const FangImpacts imp = ComputeFangImpacts(rs, aux_);
    const auto err = TopImpact(imp.error, 3);
    const auto lfr = TopImpact(imp.loss, 3);
    AggregatorParams p;
    p.assumed_malicious = 3;
    for (std::size_t u : AggregateFang(rs, aux_, FangVariant::kUnion, p).removed) {
      EXPECT_TRUE(std::binary_search(err.begin(), err.end(), u));
      EXPECT_TRUE(std::binary_search(lfr.begin(), lfr.end(), u));
    }
  }
}

TEST_F(FangTest, EmptyValidationIsConfigError) {
  ServerAux empty = aux_;
  empty.validation = DatasetShard{};
  const std::vector<ModelRanking> rs(3, good_);
  EXPECT_THROW(ComputeFangImpacts(rs, empty), ConfigError);
}

TEST(TopImpactTest, TiesByLowerPosition) {
  const std::vector<double> v{0.5, 1.0, 1.0, 0.0, 1.0};
  EXPECT_EQ(TopImpact(v, 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(TopImpact(v, 0), (std::vector<std::size_t>{}));
  EXPECT_EQ(TopImpact(v, 9).size(), 5u);
}

// Order invariance and validity across every rule, on clustered clients.
TEST(AggregateTest, ValidAndClientOrderInvariant) {
  const DatasetShard data = SynthDataset(61, 3, 4, 100, 3.0);
  const SuperNetwork net = InitSupernetwork(62, {4, 6, 3});
  std::mt19937_64 rng(63);
  const ModelRanking center = RankOf(net);
  std::vector<ModelRanking> rs;
  for (int i = 0; i < 9; ++i) {
    rs.push_back({Jitter(center[0], 15, rng), Jitter(center[1], 8, rng)});
  }
  ServerAux aux;
  aux.validation = data;
  aux.root = data;
  aux.net = &net;
  aux.k = 0.5;
  aux.global = center;
  aux.train.epochs = 1;
  aux.train.learning_rate = 0.05;
  AggregatorParams p;
  p.assumed_malicious = 2;
  p.seed = 3;
  for (AggregatorKind kind : AllAggregatorKinds()) {
    const AggregateResult base = Aggregate(kind, rs, aux, p);
    ASSERT_EQ(base.ranking.size(), 2u) << ToString(kind);
    // DnC draws a random subsample; Fang breaks impact ties by position.
    if (kind == AggregatorKind::kDnc || kind == AggregatorKind::kFangErr ||
        kind == AggregatorKind::kFangLfr || kind == AggregatorKind::kFangUnion) {
      continue;
    }
    std::vector<std::size_t> perm(rs.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<ModelRanking> shuffled;
    for (std::size_t i : perm) shuffled.push_back(rs[i]);
    const AggregateResult again = Aggregate(kind, shuffled, aux, p);
    EXPECT_EQ(again.ranking, base.ranking) << ToString(kind);
    std::vector<std::size_t> mapped;
    for (std::size_t i : again.removed) mapped.push_back(perm[i]);
    std::sort(mapped.begin(), mapped.end());
    EXPECT_EQ(mapped, base.removed) << ToString(kind);
  }
}

TEST(AggregateTest, CleanIidClientsStayNearPlainVote) {
  const DatasetShard all = SynthDataset(71, 4, 16, 1500, 4.0);
  const SuperNetwork net = InitSupernetwork(72, {16, 32, 4});
  std::vector<std::size_t> rows(all.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::vector<DatasetShard> shards;
  for (std::size_t c = 0; c < 10; ++c) {
    std::vector<std::size_t> mine;
    for (std::size_t r = c; r < rows.size(); r += 12) mine.push_back(r);
    shards.push_back(Subset(all, mine, static_cast<int>(c)));
  }
  std::vector<std::size_t> val, root;
  for (std::size_t r = 10; r < rows.size(); r += 12) val.push_back(r);
  for (std::size_t r = 11; r < rows.size(); r += 12) root.push_back(r);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 64;
  cfg.learning_rate = 0.01;
  ModelRanking global = RankOf(net);
  std::mt19937_64 rng(73);
  std::vector<ModelRanking> locals;
  for (const auto& s : shards) locals.push_back(LocalTrain(s, global, net, cfg, 0.5, rng));
  ServerAux aux;
  aux.validation = Subset(all, val);
  aux.root = Subset(all, root);
  aux.net = &net;
  aux.k = 0.5;
  aux.global = global;
  aux.train = cfg;
  AggregatorParams p;
  p.seed = 4;
  const ModelMask mv = MaskFromRanking(AggregateMv(locals).ranking, 0.5);
  const std::size_t edges = 16 * 32 + 32 * 4;
  for (AggregatorKind kind : AllAggregatorKinds()) {
    const ModelMask m = MaskFromRanking(Aggregate(kind, locals, aux, p).ranking, 0.5);
    EXPECT_LE(static_cast<double>(MaskDistance(m, mv)), 0.05 * edges) << ToString(kind);
  }
}

}  // namespace
}  // namespace frl
