#include "frl/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "frl/errors.hpp"

namespace frl {

namespace {

void CheckPermutation(std::span<const std::uint32_t> values,
                      const char* what) {
  std::vector<std::uint8_t> seen(values.size(), 0);
  for (std::uint32_t v : values) {
    if (v >= values.size()) {
      throw ValidationError(std::string(what) + ": id " + std::to_string(v) +
                            " out of range for n=" +
                            std::to_string(values.size()));
    }
    if (seen[v]) {
      throw ValidationError(std::string(what) + ": duplicate id " +
                            std::to_string(v));
    }
    seen[v] = 1;
  }
}

template <typename T>
Ranking RankByTotalsImpl(std::span<const T> totals, std::size_t layer) {
  std::vector<EdgeId> order(totals.size());
  std::iota(order.begin(), order.end(), EdgeId{0});
  std::stable_sort(order.begin(), order.end(), [&](EdgeId a, EdgeId b) {
    return totals[a] < totals[b];
  });
  return Ranking(std::move(order), layer);
}

}  // namespace

Ranking::Ranking(std::vector<EdgeId> order, std::size_t layer)
    : order_(std::move(order)), layer_(layer) {
  CheckPermutation(order_, "ranking");
}

Ranking Ranking::Identity(std::size_t n, std::size_t layer) {
  std::vector<EdgeId> order(n);
  std::iota(order.begin(), order.end(), EdgeId{0});
  return Ranking(std::move(order), layer);
}

ImportanceVector::ImportanceVector(std::vector<std::uint32_t> scores,
                                   std::size_t layer)
    : scores_(std::move(scores)), layer_(layer) {
  CheckPermutation(scores_, "importance vector");
}

SuperMask::SuperMask(std::vector<std::uint8_t> bits, double sparsity_k)
    : bits_(std::move(bits)), sparsity_k_(sparsity_k) {}

std::size_t SuperMask::popcount() const {
  return static_cast<std::size_t>(
      std::count_if(bits_.begin(), bits_.end(), [](auto b) { return b != 0; }));
}

std::size_t SelectionBoundary(std::size_t n, double k) {
  if (!(k > 0.0 && k <= 1.0)) {
    throw ParameterError("sparsity k must lie in (0, 1], got " +
                         std::to_string(k));
  }
  // The slack absorbs representation error such as (1 - 0.9) * 10 < 1.
  const double t = std::floor((1.0 - k) * static_cast<double>(n) + 1e-9);
  return std::min(n, static_cast<std::size_t>(std::max(0.0, t)));
}

ImportanceVector Invert(const Ranking& r) {
  std::vector<std::uint32_t> scores(r.size());
  for (std::size_t pos = 0; pos < r.size(); ++pos) {
    scores[r[pos]] = static_cast<std::uint32_t>(pos);
  }
  return ImportanceVector(std::move(scores), r.layer());
}

Ranking Invert(const ImportanceVector& importance) {
  std::vector<EdgeId> order(importance.size());
  for (EdgeId e = 0; e < importance.size(); ++e) {
    order[importance[e]] = e;
  }
  return Ranking(std::move(order), importance.layer());
}

SuperMask MaskFromRanking(const Ranking& r, double k) {
  const std::size_t t = SelectionBoundary(r.size(), k);
  std::vector<std::uint8_t> bits(r.size(), 0);
  for (std::size_t pos = t; pos < r.size(); ++pos) bits[r[pos]] = 1;
  return SuperMask(std::move(bits), k);
}

VoteResult MvAggregate(std::span<const Ranking> rankings) {
  if (rankings.empty()) {
    throw ValidationError("majority vote needs at least one ranking");
  }
  const std::size_t n = rankings.front().size();
  const std::size_t layer = rankings.front().layer();
  AggregatedScore score{std::vector<std::int64_t>(n, 0), layer};
  for (const Ranking& r : rankings) {
    if (r.size() != n) {
      throw ValidationError("majority vote over rankings of mixed length (" +
                            std::to_string(n) + " vs " +
                            std::to_string(r.size()) + ")");
    }
    if (r.layer() != layer) {
      throw ValidationError("majority vote over rankings of mixed layers");
    }
    for (std::size_t pos = 0; pos < n; ++pos) {
      score.totals[r[pos]] += static_cast<std::int64_t>(pos);
    }
  }
  Ranking ranking = RankByTotals(std::span<const std::int64_t>(score.totals),
                                 layer);
  return VoteResult{std::move(ranking), std::move(score)};
}

Ranking RankByTotals(std::span<const std::int64_t> totals, std::size_t layer) {
  return RankByTotalsImpl(totals, layer);
}

Ranking RankByTotals(std::span<const double> totals, std::size_t layer) {
  return RankByTotalsImpl(totals, layer);
}

std::size_t MaskDistance(const SuperMask& a, const SuperMask& b) {
  if (a.size() != b.size()) {
    throw ValidationError("mask distance between masks of different length");
  }
  std::size_t d = 0;
  for (std::size_t e = 0; e < a.size(); ++e) {
    d += (a.bits()[e] != 0) != (b.bits()[e] != 0);
  }
  return d;
}

std::int64_t BoundaryGap(const AggregatedScore& score, double k) {
  if (score.totals.empty()) throw ValidationError("empty aggregated score");
  std::vector<std::int64_t> sorted = score.totals;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t t = SelectionBoundary(sorted.size(), k);
  if (t == 0) return sorted.front();
  if (t >= sorted.size()) return 0;
  return sorted[t] - sorted[t - 1];
}

double BoundaryGap(std::span<const double> totals, double k) {
  if (totals.empty()) throw ValidationError("empty aggregated score");
  std::vector<double> sorted(totals.begin(), totals.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t t = SelectionBoundary(sorted.size(), k);
  if (t == 0) return sorted.front();
  if (t >= sorted.size()) return 0.0;
  return sorted[t] - sorted[t - 1];
}

ModelMask MaskFromRanking(const ModelRanking& r, double k) {
  ModelMask masks;
  masks.reserve(r.size());
  for (const Ranking& layer : r) masks.push_back(MaskFromRanking(layer, k));
  return masks;
}

std::size_t MaskDistance(const ModelMask& a, const ModelMask& b) {
  if (a.size() != b.size()) {
    throw ValidationError("mask distance between models of different depth");
  }
  std::size_t d = 0;
  for (std::size_t l = 0; l < a.size(); ++l) d += MaskDistance(a[l], b[l]);
  return d;
}

ModelVote MvAggregate(std::span<const ModelRanking> clients) {
  if (clients.empty()) {
    throw ValidationError("majority vote needs at least one client");
  }
  const std::size_t depth = clients.front().size();
  ModelVote vote;
  std::vector<Ranking> column;
  column.reserve(clients.size());
  for (std::size_t l = 0; l < depth; ++l) {
    column.clear();
    for (const ModelRanking& c : clients) {
      if (c.size() != depth) {
        throw ValidationError("client rankings of different depth");
      }
      column.push_back(c[l]);
    }
    VoteResult r = MvAggregate(std::span<const Ranking>(column));
    vote.ranking.push_back(std::move(r.ranking));
    vote.scores.push_back(std::move(r.score));
  }
  return vote;
}

}  // namespace frl
