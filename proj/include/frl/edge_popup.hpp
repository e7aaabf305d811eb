#ifndef FRL_EDGE_POPUP_HPP_
#define FRL_EDGE_POPUP_HPP_

// Edge-popup supernetwork: a fully-connected ReLU network whose weights are
// frozen at initialization. Each edge carries a trainable score; the top-k
// scores of a layer select the subnetwork that is actually evaluated.
//
// Edge IDs are row-major over the layer's weight matrix: the edge from input
// unit i to output unit o of a layer with fan-in F has ID o * F + i.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "frl/dataset.hpp"
#include "frl/ranking.hpp"

namespace frl {

struct Layer {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::vector<double> weights;  // fan_out x fan_in, fixed after init
  std::vector<double> scores;   // one per edge

  std::size_t edges() const { return fan_in * fan_out; }
};

struct SuperNetwork {
  std::vector<std::size_t> arch;
  std::uint64_t seed = 0;
  std::vector<Layer> layers;

  std::vector<std::size_t> EdgeCounts() const;
};

struct TrainConfig {
  int epochs = 5;
  int batch_size = 32;
  double learning_rate = 0.4;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// Throws ParameterError for non-positive epochs/batch size or negative rates.
void Validate(const TrainConfig& cfg);

// Signed-constant init: every weight is +-sqrt(2 / fan_in) with a random sign;
// scores are uniform in [0, 1). Both come from one mt19937_64 stream seeded
// with `seed`, so equal seeds give bit-identical networks.
SuperNetwork InitSupernetwork(std::uint64_t seed,
                              const std::vector<std::size_t>& arch);

// Score vector reproducing `r`: edge at position p gets (p + 1) / n.
std::vector<double> ScoresFromRanking(const Ranking& r);

// Ascending order of scores, ties by edge ID.
Ranking RankOf(std::span<const double> scores, std::size_t layer = 0);
ModelRanking RankOf(const SuperNetwork& net);

// Per-layer gate values multiplied into the weights. A SuperMask becomes 0/1
// gates; the gradient check also uses fractional gates.
using Gates = std::vector<std::vector<double>>;
Gates GatesFromMasks(const ModelMask& masks);

struct ForwardResult {
  std::vector<double> logits;  // rows x classes, row-major
  double loss = 0.0;           // mean softmax cross-entropy
};

// Forward pass through weights * gates over the given rows of `data`.
// Throws ValidationError when gate shapes do not match the layers.
ForwardResult Forward(const SuperNetwork& net, const Gates& gates,
                      const DatasetShard& data,
                      std::span<const std::size_t> rows);
ForwardResult Forward(const SuperNetwork& net, const ModelMask& masks,
                      const DatasetShard& data);

struct GradientResult {
  double loss = 0.0;
  std::vector<std::vector<double>> score_grad;  // per layer, per edge
};

// Mean loss over `rows` and its straight-through score gradient:
// dL/ds_e = dL/dz_o * w_e * a_i for every edge, gated or not.
GradientResult ScoreGradient(const SuperNetwork& net, const Gates& gates,
                             const DatasetShard& data,
                             std::span<const std::size_t> rows);

// One client's local round: scores are rebuilt from `global`, then trained
// with SGD (momentum, weight decay) on `shard`. The top-k mask is refreshed
// from the current scores before every mini-batch. Returns the ranking of the
// final scores. `net` is not modified.
ModelRanking LocalTrain(const DatasetShard& shard, const ModelRanking& global,
                        const SuperNetwork& net, const TrainConfig& cfg,
                        double k, std::mt19937_64& rng);

// Fraction of rows whose argmax logit matches the label under the top-k
// subnetwork of `r`.
double Evaluate(const ModelRanking& r, const SuperNetwork& net,
                const DatasetShard& data, double k);

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};
Evaluation EvaluateWithLoss(const ModelRanking& r, const SuperNetwork& net,
                            const DatasetShard& data, double k);

}  // namespace frl

#endif  // FRL_EDGE_POPUP_HPP_
