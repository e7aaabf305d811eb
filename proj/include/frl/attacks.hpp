#ifndef FRL_ATTACKS_HPP_
#define FRL_ATTACKS_HPP_

// Edge Control Attack (ECA) and the Random Ranking Attack (RRA) baseline.
//
// ECA steers the global subnetwork toward the mask of a target ranking R_tau
// whose accuracy is closest to the attacker's goal tau. Each round it:
//   1. estimates the benign aggregate R_bar,
//   2. finds ascending edges (selected by R_bar, not by R_tau) and descending
//      edges (selected by R_tau, not by R_bar),
//   3. moves ascending edges to the bottom and descending edges to the top of
//      R_bar, and
//   4. reverses the two segments on either side of the selection boundary,
//      which keeps the mask but pushes the voted totals away from it.

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "frl/ranking.hpp"

namespace frl {

struct AttackState {
  bool started = false;
  double tau = 0.0;
  double epsilon = 1.0;  // |ACC(R_tau) - tau|, valid once started
  ModelRanking target;   // R_tau
  std::optional<ModelRanking> history;  // latest global ranking seen
};

// Trigger and refinement rule: the first global ranking with acc >= tau
// becomes the target; afterwards any global ranking at least as close to tau
// replaces it.
AttackState UpdateTarget(AttackState state, const ModelRanking& global,
                         double acc);

enum class Estimation { kHistorical, kAlternative };

// Historical: the latest global ranking. Alternative: majority vote of the
// malicious clients' own benign-trained rankings. Throws ParameterError when
// the chosen source is missing.
ModelRanking EstimateBenign(Estimation mode,
                            const std::optional<ModelRanking>& history,
                            std::span<const ModelRanking> malicious_locals);

// Ascending and descending edges of one layer, each sorted by edge ID.
struct EdgeSets {
  std::vector<EdgeId> ascending;
  std::vector<EdgeId> descending;
};

EdgeSets IdentifyEdges(const Ranking& r_tau, const Ranking& r_bar, double k);

// Ascending edges first, descending edges last, everything else in between;
// all three groups keep their relative order from `r_bar`.
Ranking ManipulateAeDe(const Ranking& r_bar, const EdgeSets& edges);

// Reverses positions [|AE|, t) and [t, n - |DE|) of `r_hat_prime`. Requires the
// ascending edges to form its prefix and the descending edges its suffix.
Ranking InternalReverse(const Ranking& r_hat_prime, const EdgeSets& edges,
                        double k);

struct EcaInputs {
  ModelRanking global;      // ranking broadcast this round
  double accuracy = 0.0;    // attacker's accuracy estimate for `global`
  double k = 0.5;
  Estimation estimation = Estimation::kHistorical;
  // Rankings the malicious clients produced by honest local training. They
  // are submitted unchanged until the attack starts.
  std::vector<ModelRanking> malicious_locals;
  bool internal_reverse = true;  // false gives the no-freeze ablation
};

struct EcaOutput {
  std::vector<ModelRanking> rankings;  // one per malicious client
  AttackState state;
  bool active = false;
};

// One round of the attack. All malicious clients submit the same ranking.
EcaOutput EcaRound(AttackState state, const EcaInputs& in);

// Random permutations for `count` clients when acc > tau, nothing otherwise.
std::optional<std::vector<ModelRanking>> RraRound(
    double acc, double tau, std::span<const std::size_t> edges_per_layer,
    std::size_t count, std::mt19937_64& rng);

}  // namespace frl

#endif  // FRL_ATTACKS_HPP_
