#ifndef FRL_CONFIG_HPP_
#define FRL_CONFIG_HPP_

// Simulation configuration. One JSON document fully determines a run; the
// accepted keys are documented in docs/sim_config.schema.json.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "frl/attacks.hpp"
#include "frl/defenses.hpp"
#include "frl/edge_popup.hpp"

namespace frl {

enum class AttackKind { kNone, kEca, kRra };

// How malicious clients enter a round. kUniform samples all clients
// uniformly, so the malicious count varies per round. kPerRound always
// selects floor(malicious_fraction * clients_per_round) of them.
enum class MaliciousSelection { kUniform, kPerRound };

struct DatasetSpec {
  std::string kind = "synthetic";  // "synthetic" or "csv"
  std::size_t num_classes = 4;
  std::size_t dim = 16;
  std::size_t samples_per_class = 2000;
  double separation = 3.0;
  std::optional<std::uint64_t> seed;  // defaults to a stream of the run seed
  std::string path;                   // csv only
};

struct AttackSpec {
  AttackKind kind = AttackKind::kNone;
  std::optional<double> tau;
  Estimation estimation = Estimation::kHistorical;
  bool internal_reverse = true;
};

struct AggregatorSpec {
  AggregatorKind kind = AggregatorKind::kMv;
  // Unset: each round's true malicious count, capped to what the rule admits.
  std::optional<std::size_t> assumed_malicious;
  AggregatorParams params;
};

struct SimConfig {
  std::uint64_t seed = 1;
  std::size_t num_clients = 100;
  std::size_t clients_per_round = 10;
  double malicious_fraction = 0.2;
  MaliciousSelection malicious_selection = MaliciousSelection::kUniform;
  // Total rounds without an attack; rounds after the trigger with one.
  std::size_t rounds = 100;
  // Rounds allowed before the attack trigger fires.
  std::size_t warmup_cap = 500;
  double k = 0.5;
  double dirichlet_beta = 1.0;
  std::vector<std::size_t> arch = {16, 32, 4};
  DatasetSpec dataset;
  AttackSpec attack;
  AggregatorSpec aggregator;
  TrainConfig train;
  double test_fraction = 0.2;
  double validation_fraction = 0.02;
  double root_fraction = 0.02;
  std::size_t eval_window = 50;
  int threads = 1;
};

// Diagnostic for a rejected configuration; `line` is 0 when unknown.
struct ConfigIssue {
  std::size_t line = 0;
  std::string path;
  std::string message;

  std::string ToString(const std::string& file = {}) const;
};

class ConfigParseError : public std::runtime_error {
 public:
  explicit ConfigParseError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

std::string_view ToString(AttackKind kind);
std::string_view ToString(Estimation mode);
std::string_view ToString(MaliciousSelection mode);

nlohmann::json ToJson(const SimConfig& cfg);

// Strict parse: unknown keys, wrong types and out-of-range values are all
// collected into one ConfigParseError. `source` is the raw text, used to
// attach line numbers.
SimConfig ParseConfig(const std::string& source);
SimConfig LoadConfig(const std::filesystem::path& path);

// Semantic checks on an already-typed config; returns all violations.
std::vector<ConfigIssue> Check(const SimConfig& cfg);

// FNV-1a 64 over the canonical JSON dump, as 16 hex digits.
std::string ConfigHash(const SimConfig& cfg);

}  // namespace frl

#endif  // FRL_CONFIG_HPP_
