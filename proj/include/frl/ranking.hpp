#ifndef FRL_RANKING_HPP_
#define FRL_RANKING_HPP_

// Permutation algebra for federated rank learning.
//
// A Ranking lists the edge IDs of one layer from least to most important.
// Its inverse, the ImportanceVector, maps each edge to its position; majority
// voting sums importance vectors across clients and re-ranks the totals.
// All positions are 0-based and the selection boundary of a layer with n
// edges at sparsity k is t = floor((1 - k) * n): positions >= t are selected.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace frl {

using EdgeId = std::uint32_t;

class ImportanceVector;

class Ranking {
 public:
  Ranking() = default;
  // Throws ValidationError unless `order` is a permutation of 0..n-1.
  explicit Ranking(std::vector<EdgeId> order, std::size_t layer = 0);

  static Ranking Identity(std::size_t n, std::size_t layer = 0);

  std::size_t size() const { return order_.size(); }
  std::size_t layer() const { return layer_; }
  const std::vector<EdgeId>& order() const { return order_; }
  EdgeId operator[](std::size_t position) const { return order_[position]; }

  friend bool operator==(const Ranking& a, const Ranking& b) {
    return a.layer_ == b.layer_ && a.order_ == b.order_;
  }

 private:
  std::vector<EdgeId> order_;
  std::size_t layer_ = 0;
};

class ImportanceVector {
 public:
  ImportanceVector() = default;
  // Throws ValidationError unless `scores` is a permutation of 0..n-1.
  explicit ImportanceVector(std::vector<std::uint32_t> scores,
                            std::size_t layer = 0);

  std::size_t size() const { return scores_.size(); }
  std::size_t layer() const { return layer_; }
  const std::vector<std::uint32_t>& scores() const { return scores_; }
  std::uint32_t operator[](EdgeId e) const { return scores_[e]; }

  friend bool operator==(const ImportanceVector& a,
                         const ImportanceVector& b) {
    return a.layer_ == b.layer_ && a.scores_ == b.scores_;
  }

 private:
  std::vector<std::uint32_t> scores_;
  std::size_t layer_ = 0;
};

class SuperMask {
 public:
  SuperMask() = default;
  SuperMask(std::vector<std::uint8_t> bits, double sparsity_k);

  std::size_t size() const { return bits_.size(); }
  double sparsity() const { return sparsity_k_; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  bool selected(EdgeId e) const { return bits_[e] != 0; }
  std::size_t popcount() const;

  friend bool operator==(const SuperMask& a, const SuperMask& b) {
    return a.bits_ == b.bits_;
  }

 private:
  std::vector<std::uint8_t> bits_;
  double sparsity_k_ = 1.0;
};

// Sum of importance vectors over the clients of one round.
struct AggregatedScore {
  std::vector<std::int64_t> totals;
  std::size_t layer = 0;
};

struct VoteResult {
  Ranking ranking;
  AggregatedScore score;
};

// Index of the first selected position, floor((1 - k) * n).
// Throws ParameterError for k outside (0, 1].
std::size_t SelectionBoundary(std::size_t n, double k);

ImportanceVector Invert(const Ranking& r);
Ranking Invert(const ImportanceVector& importance);

SuperMask MaskFromRanking(const Ranking& r, double k);

// Majority vote. Edges are ordered by ascending total; equal totals fall back
// to ascending edge ID so the result is a pure function of the input multiset.
VoteResult MvAggregate(std::span<const Ranking> rankings);

// Orders edges by ascending `totals`, ties by ascending edge ID.
Ranking RankByTotals(std::span<const std::int64_t> totals,
                     std::size_t layer = 0);
Ranking RankByTotals(std::span<const double> totals, std::size_t layer = 0);

// Number of edges whose selection bit differs. Both masks must share n.
std::size_t MaskDistance(const SuperMask& a, const SuperMask& b);

// Gap between the smallest selected and the largest unselected total after
// sorting. For k = 1 there is no unselected edge and the smallest total is
// returned.
std::int64_t BoundaryGap(const AggregatedScore& score, double k);
double BoundaryGap(std::span<const double> totals, double k);

// Per-layer helpers; a model ranking holds one Ranking per layer.
using ModelRanking = std::vector<Ranking>;
using ModelMask = std::vector<SuperMask>;

ModelMask MaskFromRanking(const ModelRanking& r, double k);
std::size_t MaskDistance(const ModelMask& a, const ModelMask& b);

struct ModelVote {
  ModelRanking ranking;
  std::vector<AggregatedScore> scores;
};

// Layer-wise majority vote over clients' model rankings.
ModelVote MvAggregate(std::span<const ModelRanking> clients);

}  // namespace frl

#endif  // FRL_RANKING_HPP_
