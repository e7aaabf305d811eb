#include "frl/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "frl/errors.hpp"

namespace frl {

namespace {

using nlohmann::json;
using Path = std::vector<std::string>;

std::string JoinPath(const Path& path) {
  std::string out;
  for (const auto& p : path) out += "/" + p;
  return out.empty() ? "/" : out;
}

class Reader {
 public:
  explicit Reader(const std::string& source) : source_(source) {}

  void Fail(const Path& path, std::string message) {
    issues_.push_back({LineOf(path), JoinPath(path), std::move(message)});
  }

  std::vector<ConfigIssue>& issues() { return issues_; }

  void KnownKeys(const json& obj, const Path& path,
                 std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, value] : obj.items()) {
      bool ok = false;
      for (auto a : allowed) ok = ok || a == key;
      if (!ok) {
        Path p = path;
        p.push_back(key);
        Fail(p, "unknown key '" + key + "'");
      }
    }
  }

  const json* Find(const json& obj, const Path& path, std::string_view key) {
    (void)path;
    const auto it = obj.find(std::string(key));
    return it == obj.end() ? nullptr : &*it;
  }

  void Uint(const json& obj, const Path& path, std::string_view key,
            std::size_t& out) {
    const json* v = Find(obj, path, key);
    if (v == nullptr) return;
    if (!v->is_number_integer() || v->get<std::int64_t>() < 0) {
      Fail(Child(path, key), "expected a non-negative integer");
      return;
    }
    out = v->get<std::size_t>();
  }

  void Uint64(const json& obj, const Path& path, std::string_view key,
              std::uint64_t& out) {
    const json* v = Find(obj, path, key);
    if (v == nullptr) return;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
      Fail(Child(path, key), "expected a non-negative integer");
      return;
    }
    out = v->get<std::uint64_t>();
  }

  void Int(const json& obj, const Path& path, std::string_view key, int& out) {
    const json* v = Find(obj, path, key);
    if (v == nullptr) return;
    if (!v->is_number_integer()) {
      Fail(Child(path, key), "expected an integer");
      return;
    }
    out = v->get<int>();
  }

  void Real(const json& obj, const Path& path, std::string_view key,
            double& out) {
    const json* v = Find(obj, path, key);
    if (v == nullptr) return;
    if (!v->is_number()) {
      Fail(Child(path, key), "expected a number");
      return;
    }
    out = v->get<double>();
  }

  void Bool(const json& obj, const Path& path, std::string_view key,
            bool& out) {
    const json* v = Find(obj, path, key);
    if (v == nullptr) return;
    if (!v->is_boolean()) {
      Fail(Child(path, key), "expected true or false");
      return;
    }
    out = v->get<bool>();
  }

  void String(const json& obj, const Path& path, std::string_view key,
              std::string& out) {
    const json* v = Find(obj, path, key);
    if (v == nullptr) return;
    if (!v->is_string()) {
      Fail(Child(path, key), "expected a string");
      return;
    }
    out = v->get<std::string>();
  }

  const json* Object(const json& obj, const Path& path, std::string_view key) {
    const json* v = Find(obj, path, key);
    if (v == nullptr) return nullptr;
    if (!v->is_object()) {
      Fail(Child(path, key), "expected an object");
      return nullptr;
    }
    return v;
  }

  static Path Child(const Path& path, std::string_view key) {
    Path p = path;
    p.emplace_back(key);
    return p;
  }

 private:
  // Line of the last path component, searching each quoted key after the
  // previous one. Good enough for hand-written configs.
  std::size_t LineOf(const Path& path) const {
    std::size_t pos = 0;
    for (const auto& key : path) {
      const std::size_t found = source_.find("\"" + key + "\"", pos);
      if (found == std::string::npos) break;
      pos = found + 1;
    }
    if (pos == 0) return 0;
    std::size_t line = 1;
    for (std::size_t i = 0; i + 1 < pos && i < source_.size(); ++i) {
      line += source_[i] == '\n';
    }
    return line;
  }

  const std::string& source_;
  std::vector<ConfigIssue> issues_;
};

}  // namespace

std::string ConfigIssue::ToString(const std::string& file) const {
  std::ostringstream os;
  if (!file.empty()) os << file << ":";
  if (line > 0) os << line << ": ";
  os << path << ": " << message;
  return os.str();
}

ConfigParseError::ConfigParseError(std::vector<ConfigIssue> issues)
    : std::runtime_error(issues.empty() ? "invalid config"
                                        : issues.front().ToString()),
      issues_(std::move(issues)) {}

std::string_view ToString(AttackKind kind) {
  switch (kind) {
    case AttackKind::kNone: return "none";
    case AttackKind::kEca: return "eca";
    case AttackKind::kRra: return "rra";
  }
  return "none";
}

std::string_view ToString(MaliciousSelection mode) {
  return mode == MaliciousSelection::kUniform ? "uniform" : "per_round";
}

std::string_view ToString(Estimation mode) {
  return mode == Estimation::kHistorical ? "historical" : "alternative";
}

json ToJson(const SimConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["num_clients"] = cfg.num_clients;
  j["clients_per_round"] = cfg.clients_per_round;
  j["malicious_fraction"] = cfg.malicious_fraction;
  j["malicious_selection"] = ToString(cfg.malicious_selection);
  j["rounds"] = cfg.rounds;
  j["warmup_cap"] = cfg.warmup_cap;
  j["k"] = cfg.k;
  j["dirichlet_beta"] = cfg.dirichlet_beta;
  j["arch"] = cfg.arch;
  json d;
  d["kind"] = cfg.dataset.kind;
  d["num_classes"] = cfg.dataset.num_classes;
  if (cfg.dataset.kind == "csv") {
    d["path"] = cfg.dataset.path;
  } else {
    d["dim"] = cfg.dataset.dim;
    d["samples_per_class"] = cfg.dataset.samples_per_class;
    d["separation"] = cfg.dataset.separation;
  }
  d["seed"] = cfg.dataset.seed ? json(*cfg.dataset.seed) : json(nullptr);
  j["dataset"] = d;
  json a;
  a["kind"] = ToString(cfg.attack.kind);
  a["tau"] = cfg.attack.tau ? json(*cfg.attack.tau) : json(nullptr);
  a["estimation"] = ToString(cfg.attack.estimation);
  a["internal_reverse"] = cfg.attack.internal_reverse;
  j["attack"] = a;
  json g;
  const AggregatorParams& p = cfg.aggregator.params;
  g["kind"] = ToString(cfg.aggregator.kind);
  g["assumed_malicious"] = cfg.aggregator.assumed_malicious
                               ? json(*cfg.aggregator.assumed_malicious)
                               : json(nullptr);
  g["multi_krum_select"] = p.multi_krum_select;
  g["afa_xi"] = p.afa_xi;
  g["afa_xi_step"] = p.afa_xi_step;
  g["dnc_subsample"] = p.dnc_subsample;
  g["dnc_filter_fraction"] = p.dnc_filter_fraction;
  j["aggregator"] = g;
  json t;
  t["epochs"] = cfg.train.epochs;
  t["batch_size"] = cfg.train.batch_size;
  t["learning_rate"] = cfg.train.learning_rate;
  t["momentum"] = cfg.train.momentum;
  t["weight_decay"] = cfg.train.weight_decay;
  j["train"] = t;
  j["test_fraction"] = cfg.test_fraction;
  json s;
  s["validation_fraction"] = cfg.validation_fraction;
  s["root_fraction"] = cfg.root_fraction;
  j["server_aux"] = s;
  j["eval_window"] = cfg.eval_window;
  j["threads"] = cfg.threads;
  return j;
}

SimConfig ParseConfig(const std::string& source) {
  json root;
  try {
    root = json::parse(source);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < e.byte && i < source.size(); ++i) {
      line += source[i] == '\n';
    }
    throw ConfigParseError({{line, "/", std::string("malformed JSON: ") + e.what()}});
  }
  Reader rd(source);
  SimConfig cfg;
  if (!root.is_object()) {
    rd.Fail({}, "top level must be an object");
    throw ConfigParseError(rd.issues());
  }
  const Path top;
  rd.KnownKeys(root, top,
               {"seed", "num_clients", "clients_per_round", "malicious_fraction",
                "malicious_selection", "rounds", "warmup_cap", "k", "dirichlet_beta", "arch", "dataset",
                "attack", "aggregator", "train", "test_fraction", "server_aux",
                "eval_window", "threads"});
  rd.Uint64(root, top, "seed", cfg.seed);
  rd.Uint(root, top, "num_clients", cfg.num_clients);
  rd.Uint(root, top, "clients_per_round", cfg.clients_per_round);
  rd.Real(root, top, "malicious_fraction", cfg.malicious_fraction);
  {
    std::string sel = "uniform";
    rd.String(root, top, "malicious_selection", sel);
    if (sel == "uniform") {
      cfg.malicious_selection = MaliciousSelection::kUniform;
    } else if (sel == "per_round") {
      cfg.malicious_selection = MaliciousSelection::kPerRound;
    } else {
      rd.Fail({"malicious_selection"}, "must be uniform or per_round");
    }
  }
  rd.Uint(root, top, "rounds", cfg.rounds);
  rd.Uint(root, top, "warmup_cap", cfg.warmup_cap);
  rd.Real(root, top, "k", cfg.k);
  rd.Real(root, top, "dirichlet_beta", cfg.dirichlet_beta);
  rd.Real(root, top, "test_fraction", cfg.test_fraction);
  rd.Uint(root, top, "eval_window", cfg.eval_window);
  rd.Int(root, top, "threads", cfg.threads);
  if (const auto it = root.find("arch"); it != root.end()) {
    bool ok = it->is_array();
    std::vector<std::size_t> arch;
    if (ok) {
      for (const auto& w : *it) {
        if (!w.is_number_integer() || w.get<std::int64_t>() <= 0) {
          ok = false;
          break;
        }
        arch.push_back(w.get<std::size_t>());
      }
    }
    if (ok) {
      cfg.arch = std::move(arch);
    } else {
      rd.Fail({"arch"}, "expected an array of positive layer widths");
    }
  }

  if (const json* d = rd.Object(root, top, "dataset")) {
    const Path p{"dataset"};
    rd.KnownKeys(*d, p, {"kind", "num_classes", "dim", "samples_per_class",
                         "separation", "seed", "path"});
    rd.String(*d, p, "kind", cfg.dataset.kind);
    rd.Uint(*d, p, "num_classes", cfg.dataset.num_classes);
    rd.Uint(*d, p, "dim", cfg.dataset.dim);
    rd.Uint(*d, p, "samples_per_class", cfg.dataset.samples_per_class);
    rd.Real(*d, p, "separation", cfg.dataset.separation);
    rd.String(*d, p, "path", cfg.dataset.path);
    if (const auto it = d->find("seed"); it != d->end() && !it->is_null()) {
      std::uint64_t s = 0;
      rd.Uint64(*d, p, "seed", s);
      cfg.dataset.seed = s;
    }
  }

  if (const json* a = rd.Object(root, top, "attack")) {
    const Path p{"attack"};
    rd.KnownKeys(*a, p, {"kind", "tau", "estimation", "internal_reverse"});
    std::string kind = "none";
    rd.String(*a, p, "kind", kind);
    if (kind == "none") {
      cfg.attack.kind = AttackKind::kNone;
    } else if (kind == "eca") {
      cfg.attack.kind = AttackKind::kEca;
    } else if (kind == "rra") {
      cfg.attack.kind = AttackKind::kRra;
    } else {
      rd.Fail({"attack", "kind"}, "must be one of none, eca, rra");
    }
    if (const auto it = a->find("tau"); it != a->end() && !it->is_null()) {
      double tau = 0.0;
      rd.Real(*a, p, "tau", tau);
      cfg.attack.tau = tau;
    }
    std::string est = "historical";
    rd.String(*a, p, "estimation", est);
    if (est == "historical") {
      cfg.attack.estimation = Estimation::kHistorical;
    } else if (est == "alternative") {
      cfg.attack.estimation = Estimation::kAlternative;
    } else {
      rd.Fail({"attack", "estimation"}, "must be historical or alternative");
    }
    rd.Bool(*a, p, "internal_reverse", cfg.attack.internal_reverse);
  }

  if (const json* g = rd.Object(root, top, "aggregator")) {
    const Path p{"aggregator"};
    rd.KnownKeys(*g, p, {"kind", "assumed_malicious", "multi_krum_select",
                         "afa_xi", "afa_xi_step", "dnc_subsample",
                         "dnc_filter_fraction"});
    std::string kind = "mv";
    rd.String(*g, p, "kind", kind);
    try {
      cfg.aggregator.kind = ParseAggregatorKind(kind);
    } catch (const ParameterError&) {
      rd.Fail({"aggregator", "kind"},
              "unknown aggregator '" + kind +
                  "' (mv, multi_krum, afa, faba, dnc, fltrust, fang_err, "
                  "fang_lfr, fang_union)");
    }
    if (const auto it = g->find("assumed_malicious");
        it != g->end() && !it->is_null()) {
      std::size_t m = 0;
      rd.Uint(*g, p, "assumed_malicious", m);
      cfg.aggregator.assumed_malicious = m;
    }
    AggregatorParams& ap = cfg.aggregator.params;
    rd.Uint(*g, p, "multi_krum_select", ap.multi_krum_select);
    rd.Real(*g, p, "afa_xi", ap.afa_xi);
    rd.Real(*g, p, "afa_xi_step", ap.afa_xi_step);
    rd.Uint(*g, p, "dnc_subsample", ap.dnc_subsample);
    rd.Real(*g, p, "dnc_filter_fraction", ap.dnc_filter_fraction);
  }

  if (const json* t = rd.Object(root, top, "train")) {
    const Path p{"train"};
    rd.KnownKeys(*t, p, {"epochs", "batch_size", "learning_rate", "momentum",
                         "weight_decay"});
    rd.Int(*t, p, "epochs", cfg.train.epochs);
    rd.Int(*t, p, "batch_size", cfg.train.batch_size);
    rd.Real(*t, p, "learning_rate", cfg.train.learning_rate);
    rd.Real(*t, p, "momentum", cfg.train.momentum);
    rd.Real(*t, p, "weight_decay", cfg.train.weight_decay);
  }

  if (const json* s = rd.Object(root, top, "server_aux")) {
    const Path p{"server_aux"};
    rd.KnownKeys(*s, p, {"validation_fraction", "root_fraction"});
    rd.Real(*s, p, "validation_fraction", cfg.validation_fraction);
    rd.Real(*s, p, "root_fraction", cfg.root_fraction);
  }

  for (ConfigIssue& issue : Check(cfg)) {
    rd.Fail(Path{issue.path.substr(1)}, issue.message);
  }
  if (!rd.issues().empty()) throw ConfigParseError(rd.issues());
  return cfg;
}

std::vector<ConfigIssue> Check(const SimConfig& cfg) {
  std::vector<ConfigIssue> out;
  auto fail = [&](std::string path, std::string msg) {
    out.push_back({0, "/" + path, std::move(msg)});
  };
  if (cfg.num_clients == 0) fail("num_clients", "must be positive");
  if (cfg.clients_per_round == 0 || cfg.clients_per_round > cfg.num_clients) {
    fail("clients_per_round", "must lie in [1, num_clients]");
  }
  if (!(cfg.malicious_fraction >= 0.0 && cfg.malicious_fraction < 0.5)) {
    fail("malicious_fraction", "must lie in [0, 0.5)");
  }
  if (cfg.malicious_selection == MaliciousSelection::kPerRound &&
      cfg.malicious_fraction >= 0.0 && cfg.malicious_fraction < 0.5) {
    const auto total = static_cast<std::size_t>(
        std::floor(cfg.malicious_fraction * static_cast<double>(cfg.num_clients) + 1e-9));
    const auto per_round = static_cast<std::size_t>(std::floor(
        cfg.malicious_fraction * static_cast<double>(cfg.clients_per_round) + 1e-9));
    if (per_round > total ||
        cfg.clients_per_round - std::min(per_round, cfg.clients_per_round) >
            cfg.num_clients - total) {
      fail("malicious_selection",
           "per_round selection needs enough malicious and benign clients");
    }
  }
  if (!(cfg.k > 0.0 && cfg.k <= 1.0)) fail("k", "must lie in (0, 1]");
  if (!(cfg.dirichlet_beta > 0.0)) fail("dirichlet_beta", "must be positive");
  if (cfg.arch.size() < 2) fail("arch", "needs at least two layer widths");
  if (cfg.dataset.kind == "synthetic") {
    if (cfg.dataset.num_classes < 2) fail("dataset", "num_classes must be >= 2");
    if (cfg.dataset.dim == 0 || cfg.dataset.samples_per_class == 0) {
      fail("dataset", "dim and samples_per_class must be positive");
    }
    if (cfg.dataset.separation < 0.0) fail("dataset", "separation must be >= 0");
    if (cfg.arch.size() >= 2 && cfg.arch.front() != cfg.dataset.dim) {
      fail("arch", "input width must equal dataset dim");
    }
  } else if (cfg.dataset.kind == "csv") {
    if (cfg.dataset.path.empty()) fail("dataset", "csv datasets need a path");
  } else {
    fail("dataset", "kind must be synthetic or csv");
  }
  if (cfg.arch.size() >= 2 && cfg.dataset.num_classes > cfg.arch.back()) {
    fail("arch", "output width must cover every class");
  }
  if (cfg.attack.kind != AttackKind::kNone) {
    if (!cfg.attack.tau) {
      fail("attack", "eca and rra need a target tau");
    } else if (!(*cfg.attack.tau > 0.0 && *cfg.attack.tau < 1.0)) {
      fail("attack", "tau must lie in (0, 1)");
    }
  } else if (cfg.attack.tau &&
             !(*cfg.attack.tau > 0.0 && *cfg.attack.tau < 1.0)) {
    fail("attack", "tau must lie in (0, 1)");
  }
  const double used =
      cfg.test_fraction + cfg.validation_fraction + cfg.root_fraction;
  if (cfg.test_fraction <= 0.0 || cfg.validation_fraction < 0.0 ||
      cfg.root_fraction < 0.0 || used >= 1.0) {
    fail("test_fraction",
         "test fraction must be positive and server splits must leave "
         "training data");
  }
  if (cfg.eval_window == 0) fail("eval_window", "must be positive");
  if (cfg.threads < 1) fail("threads", "must be at least 1");
  try {
    Validate(cfg.train);
  } catch (const ParameterError& e) {
    fail("train", e.what());
  }
  const AggregatorParams& p = cfg.aggregator.params;
  if (!(p.afa_xi > 0.0) || p.afa_xi_step < 0.0) {
    fail("aggregator", "afa_xi must be positive and afa_xi_step >= 0");
  }
  if (!(p.dnc_filter_fraction >= 0.0)) {
    fail("aggregator", "dnc_filter_fraction must be >= 0");
  }
  if (cfg.aggregator.assumed_malicious &&
      2 * *cfg.aggregator.assumed_malicious >= cfg.clients_per_round) {
    fail("aggregator", "assumed_malicious must be below clients_per_round / 2");
  }
  return out;
}

SimConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigParseError({{0, "/", "cannot read config file " + path.string()}});
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseConfig(buffer.str());
}

std::string ConfigHash(const SimConfig& cfg) {
  const std::string text = ToJson(cfg).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
    h >>= 4;
  }
  return out;
}

}  // namespace frl
