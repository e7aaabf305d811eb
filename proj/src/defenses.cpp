#include "frl/defenses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "frl/errors.hpp"

namespace frl {

namespace {

using Point = std::vector<double>;

constexpr std::array<AggregatorKind, 9> kAllKinds = {
    AggregatorKind::kMv,      AggregatorKind::kMultiKrum,
    AggregatorKind::kAfa,     AggregatorKind::kFaba,
    AggregatorKind::kDnc,     AggregatorKind::kFlTrust,
    AggregatorKind::kFangErr, AggregatorKind::kFangLfr,
    AggregatorKind::kFangUnion,
};

void CheckClients(std::span<const ModelRanking> rs) {
  if (rs.empty()) throw ValidationError("aggregation over zero clients");
  const std::size_t depth = rs.front().size();
  for (const ModelRanking& r : rs) {
    if (r.size() != depth) {
      throw ValidationError("client rankings of different depth");
    }
    for (std::size_t l = 0; l < depth; ++l) {
      if (r[l].size() != rs.front()[l].size()) {
        throw ValidationError("client rankings of different layer sizes");
      }
    }
  }
}

std::vector<Point> EmbedAll(std::span<const ModelRanking> rs) {
  std::vector<Point> points;
  points.reserve(rs.size());
  for (const ModelRanking& r : rs) points.push_back(Embed(r));
  return points;
}

double Dot(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double SquaredDistance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Cosine similarity; 0 when either vector is zero.
double Cosine(const Point& a, const Point& b) {
  const double na = std::sqrt(Dot(a, a));
  const double nb = std::sqrt(Dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return Dot(a, b) / (na * nb);
}

Point Mean(const std::vector<Point>& points,
           const std::vector<std::size_t>& members) {
  Point mean(points.front().size(), 0.0);
  for (std::size_t u : members) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += points[u][i];
  }
  for (double& v : mean) v /= static_cast<double>(members.size());
  return mean;
}

std::vector<std::size_t> AllIndices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

std::vector<std::size_t> Complement(std::size_t n,
                                    const std::vector<std::size_t>& keep) {
  std::vector<std::uint8_t> kept(n, 0);
  for (std::size_t u : keep) kept[u] = 1;
  std::vector<std::size_t> out;
  for (std::size_t u = 0; u < n; ++u) {
    if (!kept[u]) out.push_back(u);
  }
  return out;
}

AggregateResult VoteOver(std::span<const ModelRanking> rs,
                         std::vector<std::size_t> keep) {
  std::sort(keep.begin(), keep.end());
  std::vector<ModelRanking> chosen;
  chosen.reserve(keep.size());
  for (std::size_t u : keep) chosen.push_back(rs[u]);
  ModelVote vote = MvAggregate(std::span<const ModelRanking>(chosen));
  AggregateResult result;
  result.ranking = std::move(vote.ranking);
  for (const AggregatedScore& s : vote.scores) {
    result.totals.emplace_back(s.totals.begin(), s.totals.end());
  }
  result.removed = Complement(rs.size(), keep);
  return result;
}

std::size_t ClampAssumed(std::size_t assumed, std::size_t clients) {
  return clients == 0 ? 0 : std::min(assumed, clients - 1);
}

}  // namespace

std::string_view ToString(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::kMv: return "mv";
    case AggregatorKind::kMultiKrum: return "multi_krum";
    case AggregatorKind::kAfa: return "afa";
    case AggregatorKind::kFaba: return "faba";
    case AggregatorKind::kDnc: return "dnc";
    case AggregatorKind::kFlTrust: return "fltrust";
    case AggregatorKind::kFangErr: return "fang_err";
    case AggregatorKind::kFangLfr: return "fang_lfr";
    case AggregatorKind::kFangUnion: return "fang_union";
  }
  return "unknown";
}

AggregatorKind ParseAggregatorKind(std::string_view name) {
  for (AggregatorKind kind : kAllKinds) {
    if (ToString(kind) == name) return kind;
  }
  throw ParameterError("unknown aggregator '" + std::string(name) + "'");
}

std::span<const AggregatorKind> AllAggregatorKinds() { return kAllKinds; }

std::vector<double> Embed(const ModelRanking& r) {
  std::size_t total = 0;
  for (const Ranking& layer : r) total += layer.size();
  std::vector<double> point(total);
  std::size_t offset = 0;
  for (const Ranking& layer : r) {
    const double mid = (static_cast<double>(layer.size()) - 1.0) / 2.0;
    for (std::size_t pos = 0; pos < layer.size(); ++pos) {
      point[offset + layer[pos]] = static_cast<double>(pos) - mid;
    }
    offset += layer.size();
  }
  return point;
}

AggregateResult AggregateMv(std::span<const ModelRanking> rs) {
  CheckClients(rs);
  return VoteOver(rs, AllIndices(rs.size()));
}

AggregateResult AggregateMultiKrum(std::span<const ModelRanking> rs,
                                   const AggregatorParams& params) {
  CheckClients(rs);
  const std::size_t u_count = rs.size();
  const std::size_t m = params.assumed_malicious;
  if (u_count < 2 * m + 3) {
    throw ConfigError("multi-krum needs at least 2m+3 = " +
                      std::to_string(2 * m + 3) + " clients, got " +
                      std::to_string(u_count));
  }
  std::size_t select = params.multi_krum_select;
  if (select == 0) {
    select = std::max<std::size_t>(1, u_count - 2 * m - 3);
  } else if (select > u_count) {
    throw ConfigError("multi-krum selection count exceeds the client count");
  }
  const auto points = EmbedAll(rs);
  const std::size_t neighbours = u_count - m - 2;
  std::vector<double> score(u_count, 0.0);
  std::vector<double> dist;
  for (std::size_t u = 0; u < u_count; ++u) {
    dist.clear();
    for (std::size_t v = 0; v < u_count; ++v) {
      if (v != u) dist.push_back(SquaredDistance(points[u], points[v]));
    }
    std::sort(dist.begin(), dist.end());
    score[u] = std::accumulate(dist.begin(),
                               dist.begin() + static_cast<std::ptrdiff_t>(neighbours),
                               0.0);
  }
  std::vector<std::size_t> order = AllIndices(u_count);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  order.resize(select);
  return VoteOver(rs, order);
}

AggregateResult AggregateAfa(std::span<const ModelRanking> rs,
                             const AggregatorParams& params) {
  CheckClients(rs);
  const auto points = EmbedAll(rs);
  std::vector<std::size_t> alive = AllIndices(rs.size());
  double xi = params.afa_xi;
  while (alive.size() > 1) {
    const Point mean = Mean(points, alive);
    std::vector<double> sims;
    sims.reserve(alive.size());
    for (std::size_t u : alive) sims.push_back(Cosine(points[u], mean));

    const double count = static_cast<double>(sims.size());
    const double mu = std::accumulate(sims.begin(), sims.end(), 0.0) / count;
    double var = 0.0;
    for (double s : sims) var += (s - mu) * (s - mu);
    const double sd = std::sqrt(var / count);
    std::vector<double> sorted = sims;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t half = sorted.size() / 2;
    const double median = sorted.size() % 2 == 1
                              ? sorted[half]
                              : 0.5 * (sorted[half - 1] + sorted[half]);
    if (sd <= 1e-12) break;

    std::vector<std::size_t> survivors;
    for (std::size_t j = 0; j < alive.size(); ++j) {
      const bool outlier = mu < median ? sims[j] < mu - xi * sd
                                       : sims[j] > mu + xi * sd;
      if (!outlier) survivors.push_back(alive[j]);
    }
    if (survivors.size() == alive.size()) break;
    alive = std::move(survivors);
    xi += params.afa_xi_step;
  }
  if (alive.empty()) {
    AggregateResult fallback = AggregateMv(rs);
    fallback.warnings.push_back("afa discarded every client; plain vote used");
    return fallback;
  }
  return VoteOver(rs, alive);
}

AggregateResult AggregateFaba(std::span<const ModelRanking> rs,
                              const AggregatorParams& params) {
  CheckClients(rs);
  const auto points = EmbedAll(rs);
  std::vector<std::size_t> alive = AllIndices(rs.size());
  const std::size_t rounds = ClampAssumed(params.assumed_malicious, rs.size());
  for (std::size_t it = 0; it < rounds; ++it) {
    const Point mean = Mean(points, alive);
    std::size_t worst = 0;
    double worst_dist = -1.0;
    for (std::size_t j = 0; j < alive.size(); ++j) {
      const double d = SquaredDistance(points[alive[j]], mean);
      if (d > worst_dist) {
        worst_dist = d;
        worst = j;
      }
    }
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  return VoteOver(rs, alive);
}

AggregateResult AggregateDnc(std::span<const ModelRanking> rs,
                             const AggregatorParams& params) {
  CheckClients(rs);
  const auto points = EmbedAll(rs);
  const std::size_t dims = points.front().size();
  std::mt19937_64 rng(params.seed);

  std::vector<std::size_t> coords = AllIndices(dims);
  if (params.dnc_subsample > 0 && params.dnc_subsample < dims) {
    std::vector<std::size_t> picked;
    std::sample(coords.begin(), coords.end(), std::back_inserter(picked),
                static_cast<std::ptrdiff_t>(params.dnc_subsample), rng);
    coords = std::move(picked);
  }
  const std::size_t u_count = rs.size();
  const std::size_t width = coords.size();
  std::vector<double> x(u_count * width);
  for (std::size_t u = 0; u < u_count; ++u) {
    for (std::size_t j = 0; j < width; ++j) {
      x[u * width + j] = points[u][coords[j]];
    }
  }
  for (std::size_t j = 0; j < width; ++j) {
    double mean = 0.0;
    for (std::size_t u = 0; u < u_count; ++u) mean += x[u * width + j];
    mean /= static_cast<double>(u_count);
    for (std::size_t u = 0; u < u_count; ++u) x[u * width + j] -= mean;
  }

  // Power iteration on X^T X for the top right-singular vector.
  std::vector<double> v(width), xv(u_count), next(width);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double norm = 0.0;
  for (double& c : v) {
    c = gauss(rng);
    norm += c * c;
  }
  norm = std::sqrt(norm);
  for (double& c : v) c /= norm;

  AggregateResult warnings_holder;
  bool converged = false;
  bool degenerate = false;
  for (int it = 0; it < params.dnc_max_iterations; ++it) {
    for (std::size_t u = 0; u < u_count; ++u) {
      double s = 0.0;
      for (std::size_t j = 0; j < width; ++j) s += x[u * width + j] * v[j];
      xv[u] = s;
    }
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t u = 0; u < u_count; ++u) {
      for (std::size_t j = 0; j < width; ++j) next[j] += x[u * width + j] * xv[u];
    }
    double n2 = 0.0;
    for (double c : next) n2 += c * c;
    if (n2 == 0.0) {
      degenerate = true;
      break;
    }
    const double inv = 1.0 / std::sqrt(n2);
    double change = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      next[j] *= inv;
      change = std::max(change, std::abs(next[j] - v[j]));
    }
    v.swap(next);
    if (change < params.dnc_tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged && !degenerate) {
    warnings_holder.warnings.push_back(
        "dnc power iteration hit its cap; using the last iterate");
  }

  std::vector<double> score(u_count, 0.0);
  for (std::size_t u = 0; u < u_count; ++u) {
    double s = 0.0;
    for (std::size_t j = 0; j < width; ++j) s += x[u * width + j] * v[j];
    score[u] = s * s;
  }
  const auto to_remove = static_cast<std::size_t>(std::floor(
      params.dnc_filter_fraction *
      static_cast<double>(ClampAssumed(params.assumed_malicious, u_count))));
  std::vector<std::size_t> order = AllIndices(u_count);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  std::vector<std::size_t> keep(order.begin() + static_cast<std::ptrdiff_t>(
                                                    std::min(to_remove, u_count - 1)),
                                order.end());
  AggregateResult result = VoteOver(rs, keep);
  result.warnings = std::move(warnings_holder.warnings);
  return result;
}

AggregateResult AggregateFlTrust(std::span<const ModelRanking> rs,
                                 const ModelRanking& server) {
  CheckClients(rs);
  const Point reference = Embed(server);
  const auto points = EmbedAll(rs);
  std::vector<double> trust(rs.size());
  double total = 0.0;
  for (std::size_t u = 0; u < rs.size(); ++u) {
    trust[u] = std::max(0.0, Cosine(points[u], reference));
    total += trust[u];
  }
  AggregateResult result;
  if (!(total > 0.0)) {
    result.ranking = server;
    for (const Ranking& layer : server) {
      const ImportanceVector iv = Invert(layer);
      result.totals.emplace_back(iv.scores().begin(), iv.scores().end());
    }
    result.removed = AllIndices(rs.size());
    result.weights.assign(rs.size(), 0.0);
    result.warnings.push_back("fltrust trust scores are all zero; server "
                              "ranking used");
    return result;
  }
  for (double& t : trust) t /= total;
  const std::size_t depth = rs.front().size();
  for (std::size_t l = 0; l < depth; ++l) {
    std::vector<double> totals(rs.front()[l].size(), 0.0);
    for (std::size_t u = 0; u < rs.size(); ++u) {
      if (trust[u] == 0.0) continue;
      const Ranking& r = rs[u][l];
      for (std::size_t pos = 0; pos < r.size(); ++pos) {
        totals[r[pos]] += trust[u] * static_cast<double>(pos);
      }
    }
    result.ranking.push_back(RankByTotals(std::span<const double>(totals), l));
    result.totals.push_back(std::move(totals));
  }
  for (std::size_t u = 0; u < rs.size(); ++u) {
    if (trust[u] == 0.0) result.removed.push_back(u);
  }
  result.weights = std::move(trust);
  return result;
}

AggregateResult AggregateFlTrust(std::span<const ModelRanking> rs,
                                 const ServerAux& aux,
                                 const AggregatorParams& params) {
  if (aux.net == nullptr) throw ConfigError("fltrust needs the supernetwork");
  if (aux.root.empty()) throw ConfigError("fltrust needs server root data");
  std::mt19937_64 rng(params.seed);
  const ModelRanking server =
      LocalTrain(aux.root, aux.global, *aux.net, aux.train, aux.k, rng);
  return AggregateFlTrust(rs, server);
}

FangImpacts ComputeFangImpacts(std::span<const ModelRanking> rs,
                               const ServerAux& aux) {
  CheckClients(rs);
  if (aux.validation.empty()) {
    throw ConfigError("fang aggregation needs server validation data");
  }
  if (aux.net == nullptr) throw ConfigError("fang needs the supernetwork");
  const ModelRanking all = MvAggregate(rs).ranking;
  const Evaluation base = EvaluateWithLoss(all, *aux.net, aux.validation, aux.k);
  FangImpacts impacts;
  impacts.error.assign(rs.size(), 0.0);
  impacts.loss.assign(rs.size(), 0.0);
  if (rs.size() < 2) return impacts;
  std::vector<ModelRanking> rest;
  for (std::size_t u = 0; u < rs.size(); ++u) {
    rest.clear();
    for (std::size_t v = 0; v < rs.size(); ++v) {
      if (v != u) rest.push_back(rs[v]);
    }
    const ModelRanking without =
        MvAggregate(std::span<const ModelRanking>(rest)).ranking;
    const Evaluation e = EvaluateWithLoss(without, *aux.net, aux.validation, aux.k);
    impacts.error[u] = (1.0 - base.accuracy) - (1.0 - e.accuracy);
    impacts.loss[u] = base.loss - e.loss;
  }
  return impacts;
}

std::vector<std::size_t> TopImpact(std::span<const double> impact,
                                   std::size_t count) {
  std::vector<std::size_t> order = AllIndices(impact.size());
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return impact[a] > impact[b]; });
  order.resize(std::min(count, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

AggregateResult AggregateFang(std::span<const ModelRanking> rs,
                              const ServerAux& aux, FangVariant variant,
                              const AggregatorParams& params) {
  const FangImpacts impacts = ComputeFangImpacts(rs, aux);
  const std::size_t m = ClampAssumed(params.assumed_malicious, rs.size());
  std::vector<std::size_t> flagged;
  switch (variant) {
    case FangVariant::kErr:
      flagged = TopImpact(impacts.error, m);
      break;
    case FangVariant::kLfr:
      flagged = TopImpact(impacts.loss, m);
      break;
    case FangVariant::kUnion: {
      const auto err = TopImpact(impacts.error, m);
      const auto lfr = TopImpact(impacts.loss, m);
      std::set_intersection(err.begin(), err.end(), lfr.begin(), lfr.end(),
                            std::back_inserter(flagged));
      break;
    }
  }
  return VoteOver(rs, Complement(rs.size(), flagged));
}

AggregateResult Aggregate(AggregatorKind kind, std::span<const ModelRanking> rs,
                          const ServerAux& aux, const AggregatorParams& params) {
  AggregateResult result;
  switch (kind) {
    case AggregatorKind::kMv: result = AggregateMv(rs); break;
    case AggregatorKind::kMultiKrum: result = AggregateMultiKrum(rs, params); break;
    case AggregatorKind::kAfa: result = AggregateAfa(rs, params); break;
    case AggregatorKind::kFaba: result = AggregateFaba(rs, params); break;
    case AggregatorKind::kDnc: result = AggregateDnc(rs, params); break;
    case AggregatorKind::kFlTrust: result = AggregateFlTrust(rs, aux, params); break;
    case AggregatorKind::kFangErr:
      result = AggregateFang(rs, aux, FangVariant::kErr, params);
      break;
    case AggregatorKind::kFangLfr:
      result = AggregateFang(rs, aux, FangVariant::kLfr, params);
      break;
    case AggregatorKind::kFangUnion:
      result = AggregateFang(rs, aux, FangVariant::kUnion, params);
      break;
  }
  if (result.ranking.size() != rs.front().size()) {
    throw ValidationError("aggregator returned a ranking of the wrong depth");
  }
  for (std::size_t l = 0; l < result.ranking.size(); ++l) {
    // Re-running the constructor re-checks the permutation.
    const Ranking check(result.ranking[l].order(), l);
    if (check.size() != rs.front()[l].size()) {
      throw ValidationError("aggregator returned a layer of the wrong size");
    }
  }
  return result;
}

}  // namespace frl
