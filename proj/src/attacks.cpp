#include "frl/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "frl/errors.hpp"

namespace frl {

namespace {

void CheckSameShape(const Ranking& a, const Ranking& b) {
  if (a.size() != b.size()) {
    throw ValidationError("rankings of different length (" +
                          std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
}

std::vector<std::uint8_t> Membership(std::span<const EdgeId> ids,
                                     std::size_t n, const char* what) {
  std::vector<std::uint8_t> member(n, 0);
  for (EdgeId e : ids) {
    if (e >= n) {
      throw ValidationError(std::string(what) + " edge " + std::to_string(e) +
                            " outside the layer");
    }
    member[e] = 1;
  }
  return member;
}

}  // namespace

AttackState UpdateTarget(AttackState state, const ModelRanking& global,
                         double acc) {
  const double error = std::abs(acc - state.tau);
  if (!state.started) {
    if (acc >= state.tau) {
      state.started = true;
      state.target = global;
      state.epsilon = error;
    }
    return state;
  }
  if (error <= state.epsilon) {
    state.target = global;
    state.epsilon = error;
  }
  return state;
}

ModelRanking EstimateBenign(Estimation mode,
                            const std::optional<ModelRanking>& history,
                            std::span<const ModelRanking> malicious_locals) {
  if (mode == Estimation::kHistorical) {
    if (!history) {
      throw ParameterError("historical estimation needs a previous global "
                           "ranking");
    }
    return *history;
  }
  if (malicious_locals.empty()) {
    throw ParameterError("alternative estimation needs at least one "
                         "malicious local ranking");
  }
  return MvAggregate(malicious_locals).ranking;
}

EdgeSets IdentifyEdges(const Ranking& r_tau, const Ranking& r_bar, double k) {
  CheckSameShape(r_tau, r_bar);
  const SuperMask target = MaskFromRanking(r_tau, k);
  const SuperMask benign = MaskFromRanking(r_bar, k);
  EdgeSets sets;
  for (EdgeId e = 0; e < r_tau.size(); ++e) {
    if (!target.selected(e) && benign.selected(e)) sets.ascending.push_back(e);
    if (target.selected(e) && !benign.selected(e)) sets.descending.push_back(e);
  }
  return sets;
}

Ranking ManipulateAeDe(const Ranking& r_bar, const EdgeSets& edges) {
  const std::size_t n = r_bar.size();
  const auto ae = Membership(edges.ascending, n, "ascending");
  const auto de = Membership(edges.descending, n, "descending");
  std::vector<EdgeId> head, middle, tail;
  head.reserve(edges.ascending.size());
  tail.reserve(edges.descending.size());
  middle.reserve(n);
  for (EdgeId e : r_bar.order()) {
    if (ae[e] && de[e]) {
      throw ValidationError("edge " + std::to_string(e) +
                            " is both ascending and descending");
    }
    if (ae[e]) {
      head.push_back(e);
    } else if (de[e]) {
      tail.push_back(e);
    } else {
      middle.push_back(e);
    }
  }
  head.insert(head.end(), middle.begin(), middle.end());
  head.insert(head.end(), tail.begin(), tail.end());
  return Ranking(std::move(head), r_bar.layer());
}

Ranking InternalReverse(const Ranking& r_hat_prime, const EdgeSets& edges,
                        double k) {
  const std::size_t n = r_hat_prime.size();
  const std::size_t t = SelectionBoundary(n, k);
  const std::size_t n_ae = edges.ascending.size();
  const std::size_t n_de = edges.descending.size();
  if (n_ae > t || n_de > n - t) {
    throw ValidationError("ascending/descending sets exceed the space on their "
                          "side of the boundary (|AE|=" +
                          std::to_string(n_ae) + ", |DE|=" +
                          std::to_string(n_de) + ", t=" + std::to_string(t) +
                          ", n=" + std::to_string(n) + ")");
  }
  const auto ae = Membership(edges.ascending, n, "ascending");
  const auto de = Membership(edges.descending, n, "descending");
  for (std::size_t pos = 0; pos < n_ae; ++pos) {
    if (!ae[r_hat_prime[pos]]) {
      throw ValidationError("ascending edges do not form the ranking prefix");
    }
  }
  for (std::size_t pos = n - n_de; pos < n; ++pos) {
    if (!de[r_hat_prime[pos]]) {
      throw ValidationError("descending edges do not form the ranking suffix");
    }
  }
  std::vector<EdgeId> order = r_hat_prime.order();
  const auto begin = order.begin();
  std::reverse(begin + static_cast<std::ptrdiff_t>(n_ae),
               begin + static_cast<std::ptrdiff_t>(t));
  std::reverse(begin + static_cast<std::ptrdiff_t>(t),
               begin + static_cast<std::ptrdiff_t>(n - n_de));
  return Ranking(std::move(order), r_hat_prime.layer());
}

EcaOutput EcaRound(AttackState state, const EcaInputs& in) {
  state = UpdateTarget(std::move(state), in.global, in.accuracy);
  state.history = in.global;
  EcaOutput out;
  if (!state.started) {
    out.rankings = in.malicious_locals;
    out.state = std::move(state);
    return out;
  }
  const ModelRanking r_bar =
      EstimateBenign(in.estimation, state.history, in.malicious_locals);
  if (r_bar.size() != state.target.size()) {
    throw ValidationError("target and estimate differ in depth");
  }
  ModelRanking malicious;
  malicious.reserve(r_bar.size());
  for (std::size_t l = 0; l < r_bar.size(); ++l) {
    const EdgeSets sets = IdentifyEdges(state.target[l], r_bar[l], in.k);
    Ranking r = ManipulateAeDe(r_bar[l], sets);
    if (in.internal_reverse) r = InternalReverse(r, sets, in.k);
    malicious.push_back(std::move(r));
  }
  out.rankings.assign(in.malicious_locals.size(), malicious);
  out.state = std::move(state);
  out.active = true;
  return out;
}

std::optional<std::vector<ModelRanking>> RraRound(
    double acc, double tau, std::span<const std::size_t> edges_per_layer,
    std::size_t count, std::mt19937_64& rng) {
  if (!(acc > tau)) return std::nullopt;
  std::vector<ModelRanking> out(count);
  for (ModelRanking& client : out) {
    for (std::size_t l = 0; l < edges_per_layer.size(); ++l) {
      std::vector<EdgeId> order(edges_per_layer[l]);
      std::iota(order.begin(), order.end(), EdgeId{0});
      std::shuffle(order.begin(), order.end(), rng);
      client.emplace_back(std::move(order), l);
    }
  }
  return out;
}

}  // namespace frl
