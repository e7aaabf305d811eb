#ifndef FRL_SIMULATION_HPP_
#define FRL_SIMULATION_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "frl/config.hpp"

namespace frl {

struct RoundRecord {
  std::size_t round = 0;
  double acc = 0.0;                 // global test accuracy after aggregation
  std::optional<double> xi;         // |acc - tau| when a tau is configured
  std::size_t mask_flips = 0;       // edges whose selection changed
  std::vector<double> boundary_gap; // per layer, from the aggregation totals
  double boundary_gap_mean = 0.0;
  bool attack_active = false;
  std::size_t malicious_selected = 0;
  std::vector<std::size_t> removed;  // client IDs dropped by the aggregator
  std::optional<double> attacker_acc;
  std::optional<double> epsilon;
};

struct RunSummary {
  std::size_t rounds = 0;
  double final_acc = 0.0;
  std::optional<double> mean_xi;  // over the final eval_window rounds
  std::optional<double> std_xi;
  std::optional<double> max_xi;
  double mean_flip_fraction = 0.0;
};

struct RunLog {
  SimConfig config;
  std::string config_hash;
  std::size_t total_edges = 0;
  std::optional<std::size_t> attack_start_round;
  bool trigger_fired = false;
  std::vector<RoundRecord> records;
  RunSummary summary;
  bool aborted = false;
  std::string error;

  nlohmann::json Manifest() const;
};

// The full dataset a run draws its splits from.
DatasetShard LoadDataset(const SimConfig& cfg);

// Runs the federated loop described by `cfg`. Component failures abort the
// run; the returned log then has `aborted` set and holds the rounds finished
// so far.
RunLog RunSimulation(const SimConfig& cfg);

struct ControlErrorStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

// Mean and std of |acc - tau| over the last `window` entries. Throws
// ParameterError when the window is empty or longer than the series.
ControlErrorStats ControlError(std::span<const double> accs, double tau,
                               std::size_t window);
ControlErrorStats ControlError(const RunLog& log, double tau,
                               std::size_t window);

// Percent with two decimals: "0.11 (±0.27)".
std::string FormatMeanStd(const ControlErrorStats& stats);

// Locale-independent shortest round-trip formatting.
std::string FormatNumber(double value);

// rounds.csv and manifest.json under `dir` (created if missing).
void WriteRunLog(const RunLog& log, const std::filesystem::path& dir);
std::string RoundsCsv(const RunLog& log);

struct LoadedRun {
  nlohmann::json manifest;
  std::vector<std::size_t> rounds;
  std::vector<double> acc;
  std::vector<std::optional<double>> xi;
  std::vector<std::size_t> mask_flips;
  std::vector<double> boundary_gap_mean;
  std::vector<bool> attack_active;
};

// Throws std::runtime_error when either file is missing or malformed.
LoadedRun ReadRunLog(const std::filesystem::path& dir);

// Deterministic 64-bit stream derivation from the run seed.
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t tag,
                         std::uint64_t a = 0, std::uint64_t b = 0);

}  // namespace frl

#endif  // FRL_SIMULATION_HPP_
