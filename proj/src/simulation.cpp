#include "frl/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <thread>

#include "frl/attacks.hpp"
#include "frl/dataset.hpp"
#include "frl/defenses.hpp"
#include "frl/edge_popup.hpp"
#include "frl/errors.hpp"
#include "frl/ranking.hpp"

namespace frl {

namespace {

enum StreamTag : std::uint64_t {
  kTagData = 1,
  kTagNet,
  kTagSplit,
  kTagPartition,
  kTagSelect,
  kTagClient,
  kTagRra,
  kTagAggregator,
};

std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct Splits {
  DatasetShard test;
  DatasetShard validation;
  DatasetShard root;
  std::vector<DatasetShard> clients;
};

Splits MakeSplits(const SimConfig& cfg, const DatasetShard& all) {
  std::mt19937_64 rng(DeriveSeed(cfg.seed, kTagSplit));
  std::vector<std::size_t> rows(all.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::shuffle(rows.begin(), rows.end(), rng);
  const auto count = [&](double fraction) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(all.rows())));
  };
  const std::size_t n_test = count(cfg.test_fraction);
  const std::size_t n_val = count(cfg.validation_fraction);
  const std::size_t n_root = count(cfg.root_fraction);
  if (n_test == 0 || n_test + n_val + n_root >= all.rows()) {
    throw ConfigError("dataset too small for the requested splits");
  }
  auto take = [&](std::size_t begin, std::size_t len) {
    std::vector<std::size_t> part(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                  rows.begin() + static_cast<std::ptrdiff_t>(begin + len));
    std::sort(part.begin(), part.end());
    return Subset(all, part);
  };
  Splits s;
  s.test = take(0, n_test);
  s.validation = take(n_test, n_val);
  s.root = take(n_test + n_val, n_root);
  const std::size_t used = n_test + n_val + n_root;
  DatasetShard rest = take(used, all.rows() - used);
  std::mt19937_64 prng(DeriveSeed(cfg.seed, kTagPartition));
  s.clients = DirichletPartition(rest, cfg.num_clients, cfg.dirichlet_beta, prng);
  return s;
}

// Trains every selected client; each task owns its RNG stream and output
// slot, so the thread count never changes results.
std::vector<ModelRanking> TrainClients(const SimConfig& cfg, const Splits& splits,
                                       const SuperNetwork& net,
                                       const ModelRanking& global,
                                       std::span<const std::size_t> selected,
                                       std::size_t round) {
  std::vector<ModelRanking> out(selected.size());
  std::vector<std::exception_ptr> errors(selected.size());
  auto work = [&](std::size_t i) {
    try {
      std::mt19937_64 rng(DeriveSeed(cfg.seed, kTagClient, round, selected[i]));
      out[i] = LocalTrain(splits.clients[selected[i]], global, net, cfg.train,
                          cfg.k, rng);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t threads =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(cfg.threads, 1)),
                            selected.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < selected.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < selected.size(); i += threads) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::size_t AssumedMalicious(const SimConfig& cfg, std::size_t actual,
                             std::size_t selected) {
  if (cfg.aggregator.assumed_malicious) return *cfg.aggregator.assumed_malicious;
  std::size_t cap = selected == 0 ? 0 : (selected - 1) / 2;
  if (cfg.aggregator.kind == AggregatorKind::kMultiKrum) {
    cap = selected >= 3 ? (selected - 3) / 2 : 0;
  }
  return std::min(actual, cap);
}

void Summarize(RunLog& log) {
  RunSummary& s = log.summary;
  s.rounds = log.records.size();
  if (log.records.empty()) return;
  s.final_acc = log.records.back().acc;
  double flips = 0.0;
  for (const auto& r : log.records) flips += static_cast<double>(r.mask_flips);
  s.mean_flip_fraction = log.total_edges == 0
                             ? 0.0
                             : flips / static_cast<double>(log.records.size()) /
                                   static_cast<double>(log.total_edges);
  if (log.config.attack.tau) {
    const std::size_t window = std::min(log.config.eval_window, log.records.size());
    const ControlErrorStats st = ControlError(log, *log.config.attack.tau, window);
    s.mean_xi = st.mean;
    s.std_xi = st.std;
    double mx = 0.0;
    for (std::size_t i = log.records.size() - window; i < log.records.size(); ++i) {
      mx = std::max(mx, *log.records[i].xi);
    }
    s.max_xi = mx;
  }
}

}  // namespace

std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t tag, std::uint64_t a,
                         std::uint64_t b) {
  std::uint64_t h = SplitMix(seed);
  h = SplitMix(h ^ tag);
  h = SplitMix(h ^ a);
  return SplitMix(h ^ b);
}

DatasetShard LoadDataset(const SimConfig& cfg) {
  if (cfg.dataset.kind == "csv") {
    return LoadCsv(cfg.dataset.path, cfg.dataset.num_classes);
  }
  const std::uint64_t seed = cfg.dataset.seed.value_or(DeriveSeed(cfg.seed, kTagData));
  return SynthDataset(seed, cfg.dataset.num_classes, cfg.dataset.dim,
                      cfg.dataset.samples_per_class, cfg.dataset.separation);
}

RunLog RunSimulation(const SimConfig& cfg) {
  if (auto issues = Check(cfg); !issues.empty()) throw ConfigParseError(issues);
  RunLog log;
  log.config = cfg;
  log.config_hash = ConfigHash(cfg);
  try {
    const DatasetShard all = LoadDataset(cfg);
    if (all.dim != cfg.arch.front() || all.num_classes > cfg.arch.back()) {
      throw ConfigError("arch does not match the dataset shape");
    }
    const Splits splits = MakeSplits(cfg, all);
    const SuperNetwork net = InitSupernetwork(DeriveSeed(cfg.seed, kTagNet), cfg.arch);
    const std::vector<std::size_t> edges = net.EdgeCounts();
    log.total_edges = std::accumulate(edges.begin(), edges.end(), std::size_t{0});

    const std::size_t num_malicious = static_cast<std::size_t>(
        std::floor(cfg.malicious_fraction * static_cast<double>(cfg.num_clients) + 1e-9));
    const bool attacking = cfg.attack.kind != AttackKind::kNone && num_malicious > 0;
    DatasetShard attacker_data;
    if (attacking) {
      attacker_data = Concat(std::span<const DatasetShard>(splits.clients.data(), num_malicious));
    }

    ServerAux aux;
    aux.validation = splits.validation;
    aux.root = splits.root;
    aux.net = &net;
    aux.train = cfg.train;
    aux.k = cfg.k;

    ModelRanking global = RankOf(net);
    ModelMask mask = MaskFromRanking(global, cfg.k);
    AttackState eca;
    eca.tau = cfg.attack.tau.value_or(0.0);
    std::vector<std::size_t> all_clients(cfg.num_clients);
    std::iota(all_clients.begin(), all_clients.end(), std::size_t{0});

    std::size_t limit = attacking ? cfg.warmup_cap + cfg.rounds : cfg.rounds;
    for (std::size_t round = 0; round < limit; ++round) {
      std::mt19937_64 srng(DeriveSeed(cfg.seed, kTagSelect, round));
      std::vector<std::size_t> selected;
      if (cfg.malicious_selection == MaliciousSelection::kPerRound) {
        const std::size_t m = std::min(
            num_malicious,
            static_cast<std::size_t>(std::floor(
                cfg.malicious_fraction * static_cast<double>(cfg.clients_per_round) +
                1e-9)));
        const auto mid = all_clients.begin() + static_cast<std::ptrdiff_t>(num_malicious);
        std::sample(all_clients.begin(), mid, std::back_inserter(selected), m, srng);
        std::sample(mid, all_clients.end(), std::back_inserter(selected),
                    cfg.clients_per_round - m, srng);
      } else {
        std::sample(all_clients.begin(), all_clients.end(), std::back_inserter(selected),
                    cfg.clients_per_round, srng);
      }
      // Submission order carries no information about client identity.
      std::shuffle(selected.begin(), selected.end(), srng);
      std::vector<ModelRanking> updates =
          TrainClients(cfg, splits, net, global, selected, round);

      RoundRecord rec;
      rec.round = round;
      std::vector<std::size_t> mal_pos;
      for (std::size_t i = 0; i < selected.size(); ++i) {
        if (selected[i] < num_malicious) mal_pos.push_back(i);
      }
      rec.malicious_selected = mal_pos.size();

      if (attacking && !mal_pos.empty()) {
        const double acc = Evaluate(global, net, attacker_data, cfg.k);
        rec.attacker_acc = acc;
        if (cfg.attack.kind == AttackKind::kEca) {
          EcaInputs in;
          in.global = global;
          in.accuracy = acc;
          in.k = cfg.k;
          in.estimation = cfg.attack.estimation;
          in.internal_reverse = cfg.attack.internal_reverse;
          for (std::size_t p : mal_pos) in.malicious_locals.push_back(updates[p]);
          EcaOutput out = EcaRound(std::move(eca), in);
          eca = std::move(out.state);
          if (eca.started) {
            rec.epsilon = eca.epsilon;
            if (!log.trigger_fired) {
              log.trigger_fired = true;
              log.attack_start_round = round;
              limit = round + cfg.rounds;
            }
          }
          rec.attack_active = out.active;
          for (std::size_t j = 0; j < mal_pos.size(); ++j) {
            updates[mal_pos[j]] = std::move(out.rankings[j]);
          }
        } else {
          std::mt19937_64 rrng(DeriveSeed(cfg.seed, kTagRra, round));
          auto forged = RraRound(acc, *cfg.attack.tau, edges, mal_pos.size(), rrng);
          if (forged) {
            rec.attack_active = true;
            if (!log.trigger_fired) {
              log.trigger_fired = true;
              log.attack_start_round = round;
              limit = round + cfg.rounds;
            }
            for (std::size_t j = 0; j < mal_pos.size(); ++j) {
              updates[mal_pos[j]] = std::move((*forged)[j]);
            }
          }
        }
      }

      AggregatorParams params = cfg.aggregator.params;
      // Without an attack every client is honest, so the true count is zero.
      params.assumed_malicious = AssumedMalicious(
          cfg, attacking ? rec.malicious_selected : 0, selected.size());
      params.seed = DeriveSeed(cfg.seed, kTagAggregator, round);
      aux.global = global;
      AggregateResult agg = Aggregate(cfg.aggregator.kind, updates, aux, params);
      for (std::size_t p : agg.removed) rec.removed.push_back(selected[p]);
      std::sort(rec.removed.begin(), rec.removed.end());

      ModelMask next_mask = MaskFromRanking(agg.ranking, cfg.k);
      rec.mask_flips = MaskDistance(mask, next_mask);
      double gap_sum = 0.0;
      for (const auto& totals : agg.totals) {
        rec.boundary_gap.push_back(BoundaryGap(std::span<const double>(totals), cfg.k));
        gap_sum += rec.boundary_gap.back();
      }
      rec.boundary_gap_mean =
          agg.totals.empty() ? 0.0 : gap_sum / static_cast<double>(agg.totals.size());

      global = std::move(agg.ranking);
      mask = std::move(next_mask);
      rec.acc = Evaluate(global, net, splits.test, cfg.k);
      if (cfg.attack.tau) rec.xi = std::fabs(rec.acc - *cfg.attack.tau);
      log.records.push_back(std::move(rec));
    }
  } catch (const std::exception& e) {
    log.aborted = true;
    log.error = e.what();
  }
  Summarize(log);
  return log;
}

ControlErrorStats ControlError(std::span<const double> accs, double tau,
                               std::size_t window) {
  if (window == 0 || window > accs.size()) {
    throw ParameterError("control error window must lie in [1, rounds]");
  }
  const auto tail = accs.subspan(accs.size() - window);
  double mean = 0.0;
  for (double a : tail) mean += std::fabs(a - tau);
  mean /= static_cast<double>(window);
  double var = 0.0;
  for (double a : tail) {
    const double d = std::fabs(a - tau) - mean;
    var += d * d;
  }
  var /= static_cast<double>(window);
  return {mean, std::sqrt(var)};
}

ControlErrorStats ControlError(const RunLog& log, double tau, std::size_t window) {
  std::vector<double> accs;
  accs.reserve(log.records.size());
  for (const auto& r : log.records) accs.push_back(r.acc);
  return ControlError(accs, tau, window);
}

}  // namespace frl
