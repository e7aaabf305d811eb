#ifndef FRL_DEFENSES_HPP_
#define FRL_DEFENSES_HPP_

// Byzantine-robust aggregators adapted to rankings.
//
// Distance- and cosine-based rules need a Euclidean point per client. A
// client is embedded as the concatenation of its per-layer importance
// vectors, each shifted by (n - 1) / 2 so that a uniformly random ranking
// sits at the origin and a reversed ranking is the exact negation.
// Every rule ends in a majority vote (FLTrust: a trust-weighted vote).

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "frl/dataset.hpp"
#include "frl/edge_popup.hpp"
#include "frl/ranking.hpp"

namespace frl {

enum class AggregatorKind {
  kMv,
  kMultiKrum,
  kAfa,
  kFaba,
  kDnc,
  kFlTrust,
  kFangErr,
  kFangLfr,
  kFangUnion,
};

std::string_view ToString(AggregatorKind kind);
// Throws ParameterError on unknown names.
AggregatorKind ParseAggregatorKind(std::string_view name);
std::span<const AggregatorKind> AllAggregatorKinds();

struct AggregatorParams {
  std::size_t assumed_malicious = 0;  // m-hat
  std::size_t multi_krum_select = 0;  // c; 0 picks U - 2 m-hat - 3
  double afa_xi = 2.0;                // initial band half-width in stds
  double afa_xi_step = 0.5;           // widening per AFA pass
  std::size_t dnc_subsample = 10000;  // coordinates kept by DnC
  double dnc_filter_fraction = 1.0;   // DnC removes floor(f * m-hat)
  int dnc_max_iterations = 100;
  double dnc_tolerance = 1e-6;
  std::uint64_t seed = 0;             // DnC subsample and FLTrust training
};

// Server-side resources used by the validation- and trust-based rules.
struct ServerAux {
  DatasetShard validation;       // Fang
  DatasetShard root;             // FLTrust
  const SuperNetwork* net = nullptr;
  TrainConfig train;
  double k = 0.5;
  ModelRanking global;           // ranking broadcast this round
};

struct AggregateResult {
  ModelRanking ranking;
  // Per-layer totals behind `ranking` (importance sums or trust-weighted
  // sums), used for boundary-gap diagnostics.
  std::vector<std::vector<double>> totals;
  std::vector<std::size_t> removed;  // input positions excluded from the vote
  std::vector<double> weights;       // FLTrust normalized trust, else empty
  std::vector<std::string> warnings;
};

// Concatenated, midpoint-centered importance vectors.
std::vector<double> Embed(const ModelRanking& r);

AggregateResult AggregateMv(std::span<const ModelRanking> rs);
AggregateResult AggregateMultiKrum(std::span<const ModelRanking> rs,
                                   const AggregatorParams& params);
AggregateResult AggregateAfa(std::span<const ModelRanking> rs,
                             const AggregatorParams& params);
AggregateResult AggregateFaba(std::span<const ModelRanking> rs,
                              const AggregatorParams& params);
AggregateResult AggregateDnc(std::span<const ModelRanking> rs,
                             const AggregatorParams& params);
// Trust-weighted vote against a server reference ranking: each client weighs
// max(0, cos(client, server)), normalized to sum to one.
AggregateResult AggregateFlTrust(std::span<const ModelRanking> rs,
                                 const ModelRanking& server);
// Trains the server reference on `aux.root` starting from `aux.global`.
AggregateResult AggregateFlTrust(std::span<const ModelRanking> rs,
                                 const ServerAux& aux,
                                 const AggregatorParams& params);

enum class FangVariant { kErr, kLfr, kUnion };

struct FangImpacts {
  std::vector<double> error;  // err(all) - err(without u)
  std::vector<double> loss;   // loss(all) - loss(without u)
};
FangImpacts ComputeFangImpacts(std::span<const ModelRanking> rs,
                               const ServerAux& aux);
// The `count` clients with the largest impact, ties by lower position.
std::vector<std::size_t> TopImpact(std::span<const double> impact,
                                   std::size_t count);

AggregateResult AggregateFang(std::span<const ModelRanking> rs,
                              const ServerAux& aux, FangVariant variant,
                              const AggregatorParams& params);

// Dispatches on `kind`. The result ranking is validated per layer.
AggregateResult Aggregate(AggregatorKind kind, std::span<const ModelRanking> rs,
                          const ServerAux& aux, const AggregatorParams& params);

}  // namespace frl

#endif  // FRL_DEFENSES_HPP_
