#include "frl/edge_popup.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "frl/errors.hpp"

namespace frl {

namespace {

void CheckGates(const SuperNetwork& net, const Gates& gates) {
  if (gates.size() != net.layers.size()) {
    throw ValidationError("gate depth " + std::to_string(gates.size()) +
                          " does not match network depth " +
                          std::to_string(net.layers.size()));
  }
  for (std::size_t l = 0; l < gates.size(); ++l) {
    if (gates[l].size() != net.layers[l].edges()) {
      throw ValidationError("layer " + std::to_string(l) + " expects " +
                            std::to_string(net.layers[l].edges()) +
                            " gates, got " + std::to_string(gates[l].size()));
    }
  }
}

void CheckInput(const SuperNetwork& net, const DatasetShard& data) {
  if (data.dim != net.arch.front()) {
    throw ValidationError("data dimension " + std::to_string(data.dim) +
                          " does not match input width " +
                          std::to_string(net.arch.front()));
  }
  if (data.num_classes > net.arch.back()) {
    throw ValidationError("data has more classes than output units");
  }
}

std::vector<std::vector<double>> EffectiveWeights(const SuperNetwork& net,
                                                  const Gates& gates) {
  std::vector<std::vector<double>> eff(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& w = net.layers[l].weights;
    eff[l].resize(w.size());
    for (std::size_t e = 0; e < w.size(); ++e) eff[l][e] = w[e] * gates[l][e];
  }
  return eff;
}

// Activations of every layer for one sample; acts[0] is the input and
// acts.back() holds the logits.
void ForwardSample(const SuperNetwork& net,
                   const std::vector<std::vector<double>>& eff,
                   std::span<const double> x,
                   std::vector<std::vector<double>>& acts) {
  acts.resize(net.layers.size() + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    const bool hidden = l + 1 < net.layers.size();
    auto& out = acts[l + 1];
    out.assign(layer.fan_out, 0.0);
    const auto& in = acts[l];
    for (std::size_t o = 0; o < layer.fan_out; ++o) {
      const double* w = eff[l].data() + o * layer.fan_in;
      double z = 0.0;
      for (std::size_t i = 0; i < layer.fan_in; ++i) z += w[i] * in[i];
      out[o] = hidden && z < 0.0 ? 0.0 : z;  // NaN passes through
    }
  }
}

// Softmax cross-entropy of one logit row; fills `prob` with the softmax.
double CrossEntropy(std::span<const double> logits, int label,
                    std::vector<double>& prob) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  prob.resize(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    prob[c] = std::exp(logits[c] - top);
    sum += prob[c];
  }
  for (double& p : prob) p /= sum;
  return std::log(sum) + top - logits[static_cast<std::size_t>(label)];
}

std::vector<std::size_t> AllRows(const DatasetShard& data) {
  std::vector<std::size_t> rows(data.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace

std::vector<std::size_t> SuperNetwork::EdgeCounts() const {
  std::vector<std::size_t> counts;
  counts.reserve(layers.size());
  for (const Layer& l : layers) counts.push_back(l.edges());
  return counts;
}

void Validate(const TrainConfig& cfg) {
  if (cfg.epochs <= 0) throw ParameterError("epochs must be positive");
  if (cfg.batch_size <= 0) throw ParameterError("batch_size must be positive");
  if (cfg.learning_rate < 0.0 || cfg.momentum < 0.0 || cfg.momentum >= 1.0 ||
      cfg.weight_decay < 0.0) {
    throw ParameterError(
        "learning_rate and weight_decay must be >= 0, momentum in [0, 1)");
  }
}

SuperNetwork InitSupernetwork(std::uint64_t seed,
                              const std::vector<std::size_t>& arch) {
  if (arch.size() < 2) {
    throw ParameterError("architecture needs at least an input and an output "
                         "layer");
  }
  if (std::find(arch.begin(), arch.end(), std::size_t{0}) != arch.end()) {
    throw ParameterError("architecture has a zero-width layer");
  }
  SuperNetwork net;
  net.arch = arch;
  net.seed = seed;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution sign(0.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < arch.size(); ++l) {
    Layer layer;
    layer.fan_in = arch[l];
    layer.fan_out = arch[l + 1];
    const double magnitude = std::sqrt(2.0 / static_cast<double>(arch[l]));
    layer.weights.resize(layer.edges());
    for (double& w : layer.weights) w = sign(rng) ? magnitude : -magnitude;
    layer.scores.resize(layer.edges());
    for (double& s : layer.scores) s = unit(rng);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

std::vector<double> ScoresFromRanking(const Ranking& r) {
  const double n = static_cast<double>(r.size());
  std::vector<double> scores(r.size());
  for (std::size_t pos = 0; pos < r.size(); ++pos) {
    scores[r[pos]] = static_cast<double>(pos + 1) / n;
  }
  return scores;
}

Ranking RankOf(std::span<const double> scores, std::size_t layer) {
  return RankByTotals(scores, layer);
}

ModelRanking RankOf(const SuperNetwork& net) {
  ModelRanking r;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    r.push_back(RankOf(net.layers[l].scores, l));
  }
  return r;
}

Gates GatesFromMasks(const ModelMask& masks) {
  Gates gates(masks.size());
  for (std::size_t l = 0; l < masks.size(); ++l) {
    const auto& bits = masks[l].bits();
    gates[l].assign(bits.begin(), bits.end());
  }
  return gates;
}

ForwardResult Forward(const SuperNetwork& net, const Gates& gates,
                      const DatasetShard& data,
                      std::span<const std::size_t> rows) {
  CheckGates(net, gates);
  CheckInput(net, data);
  const auto eff = EffectiveWeights(net, gates);
  const std::size_t classes = net.arch.back();
  ForwardResult result;
  result.logits.reserve(rows.size() * classes);
  std::vector<std::vector<double>> acts;
  std::vector<double> prob;
  double total = 0.0;
  for (std::size_t r : rows) {
    ForwardSample(net, eff, data.row(r), acts);
    total += CrossEntropy(acts.back(), data.labels[r], prob);
    result.logits.insert(result.logits.end(), acts.back().begin(),
                         acts.back().end());
  }
  result.loss = rows.empty() ? 0.0 : total / static_cast<double>(rows.size());
  return result;
}

ForwardResult Forward(const SuperNetwork& net, const ModelMask& masks,
                      const DatasetShard& data) {
  const auto rows = AllRows(data);
  return Forward(net, GatesFromMasks(masks), data, rows);
}

GradientResult ScoreGradient(const SuperNetwork& net, const Gates& gates,
                             const DatasetShard& data,
                             std::span<const std::size_t> rows) {
  CheckGates(net, gates);
  CheckInput(net, data);
  if (rows.empty()) throw ValidationError("gradient over an empty batch");
  const auto eff = EffectiveWeights(net, gates);
  const std::size_t depth = net.layers.size();
  GradientResult result;
  result.score_grad.resize(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    result.score_grad[l].assign(net.layers[l].edges(), 0.0);
  }
  const double scale = 1.0 / static_cast<double>(rows.size());
  std::vector<std::vector<double>> acts;
  std::vector<double> delta, prev_delta, prob;
  double total = 0.0;
  for (std::size_t r : rows) {
    ForwardSample(net, eff, data.row(r), acts);
    total += CrossEntropy(acts.back(), data.labels[r], prob);
    delta = prob;
    delta[static_cast<std::size_t>(data.labels[r])] -= 1.0;
    for (double& d : delta) d *= scale;
    for (std::size_t l = depth; l-- > 0;) {
      const Layer& layer = net.layers[l];
      const auto& in = acts[l];
      auto& grad = result.score_grad[l];
      for (std::size_t o = 0; o < layer.fan_out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const std::size_t base = o * layer.fan_in;
        for (std::size_t i = 0; i < layer.fan_in; ++i) {
          grad[base + i] += d * layer.weights[base + i] * in[i];
        }
      }
      if (l == 0) break;
      prev_delta.assign(layer.fan_in, 0.0);
      for (std::size_t o = 0; o < layer.fan_out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* w = eff[l].data() + o * layer.fan_in;
        for (std::size_t i = 0; i < layer.fan_in; ++i) prev_delta[i] += w[i] * d;
      }
      // in[i] is the ReLU output, so in[i] > 0 exactly where the unit is
      // active.
      for (std::size_t i = 0; i < layer.fan_in; ++i) {
        if (in[i] <= 0.0) prev_delta[i] = 0.0;
      }
      delta.swap(prev_delta);
    }
  }
  result.loss = total * scale;
  return result;
}

ModelRanking LocalTrain(const DatasetShard& shard, const ModelRanking& global,
                        const SuperNetwork& net, const TrainConfig& cfg,
                        double k, std::mt19937_64& rng) {
  if (shard.empty()) throw ValidationError("local training on an empty shard");
  Validate(cfg);
  const std::size_t depth = net.layers.size();
  if (global.size() != depth) {
    throw ValidationError("global ranking depth does not match the network");
  }
  std::vector<std::vector<double>> scores(depth), velocity(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    if (global[l].size() != net.layers[l].edges()) {
      throw ValidationError("global ranking of layer " + std::to_string(l) +
                            " has the wrong edge count");
    }
    scores[l] = ScoresFromRanking(global[l]);
    velocity[l].assign(scores[l].size(), 0.0);
  }

  std::vector<std::size_t> order = AllRows(shard);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  Gates gates(depth);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      for (std::size_t l = 0; l < depth; ++l) {
        const SuperMask mask = MaskFromRanking(RankOf(scores[l], l), k);
        gates[l].assign(mask.bits().begin(), mask.bits().end());
      }
      const std::span<const std::size_t> rows(order.data() + start,
                                              end - start);
      GradientResult g = ScoreGradient(net, gates, shard, rows);
      if (!std::isfinite(g.loss)) {
        throw TrainingError("non-finite loss in local training of client " +
                            std::to_string(shard.owner) + " at epoch " +
                            std::to_string(epoch) + ", batch offset " +
                            std::to_string(start));
      }
      for (std::size_t l = 0; l < depth; ++l) {
        auto& s = scores[l];
        auto& v = velocity[l];
        const auto& grad = g.score_grad[l];
        for (std::size_t e = 0; e < s.size(); ++e) {
          const double step = grad[e] + cfg.weight_decay * s[e];
          v[e] = cfg.momentum * v[e] + step;
          s[e] -= cfg.learning_rate * v[e];
        }
      }
    }
  }

  ModelRanking out;
  out.reserve(depth);
  for (std::size_t l = 0; l < depth; ++l) out.push_back(RankOf(scores[l], l));
  return out;
}

Evaluation EvaluateWithLoss(const ModelRanking& r, const SuperNetwork& net,
                            const DatasetShard& data, double k) {
  if (data.empty()) throw ValidationError("evaluation on empty data");
  const ForwardResult fwd = Forward(net, MaskFromRanking(r, k), data);
  const std::size_t classes = net.arch.back();
  std::size_t correct = 0;
  for (std::size_t row = 0; row < data.rows(); ++row) {
    const auto begin = fwd.logits.begin() + static_cast<std::ptrdiff_t>(row * classes);
    const auto best = std::max_element(begin, begin + static_cast<std::ptrdiff_t>(classes));
    correct += (best - begin) == data.labels[row];
  }
  return {static_cast<double>(correct) / static_cast<double>(data.rows()),
          fwd.loss};
}

double Evaluate(const ModelRanking& r, const SuperNetwork& net,
                const DatasetShard& data, double k) {
  return EvaluateWithLoss(r, net, data, k).accuracy;
}

}  // namespace frl
