// frl: simulate federated rank learning runs, evaluate the vulnerable-edge
// analysis, and summarize control error across runs.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "frl/config.hpp"
#include "frl/errors.hpp"
#include "frl/simulation.hpp"
#include "frl/theory.hpp"

namespace {

using frl::FormatNumber;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

std::filesystem::path DefaultOutDir() {
  const char* env = std::getenv("FRL_OUT_DIR");
  return env != nullptr && *env != '\0' ? std::filesystem::path(env)
                                        : std::filesystem::path("runs");
}

struct SimulateArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int verbose = 0;
};

int Simulate(const SimulateArgs& args) {
  frl::SimConfig cfg;
  try {
    cfg = frl::LoadConfig(args.config);
    if (args.seed) {
      cfg.seed = *args.seed;
      if (auto issues = frl::Check(cfg); !issues.empty()) {
        throw frl::ConfigParseError(issues);
      }
    }
  } catch (const frl::ConfigParseError& e) {
    for (const auto& issue : e.issues()) {
      std::cerr << issue.ToString(args.config) << "\n";
    }
    return kUsage;
  }
  const std::filesystem::path out =
      args.out.empty() ? DefaultOutDir() / frl::ConfigHash(cfg)
                       : std::filesystem::path(args.out);
  const frl::RunLog log = frl::RunSimulation(cfg);
  try {
    frl::WriteRunLog(log, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  if (args.verbose > 0) {
    for (const auto& r : log.records) {
      std::cerr << "round " << r.round << " acc " << FormatNumber(r.acc)
                << " flips " << r.mask_flips
                << (r.attack_active ? " attack" : "") << "\n";
    }
  }
  if (log.aborted) {
    std::cerr << "error: run aborted after " << log.records.size()
              << " rounds: " << log.error << "\n";
    return kRuntime;
  }
  std::cout << out.string() << "\n";
  return kOk;
}

struct TheoryArgs {
  double alpha = 0.2;
  double sigma = 100;
  double n = 1000;
  double k = 0.5;
  std::optional<double> mu;
  int clients = 25;
  std::int64_t trials = 100000;
  std::uint64_t seed = 1;
  std::string sweep;
  std::string out;
};

std::vector<double> ReadAxis(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return {fallback};
  const json& v = j.at(key);
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array() || v.empty()) {
    throw frl::ParameterError(std::string("sweep axis '") + key +
                              "' must be a number or a non-empty array");
  }
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) {
      throw frl::ParameterError(std::string("sweep axis '") + key +
                                "' holds a non-number");
    }
    out.push_back(x.get<double>());
  }
  return out;
}

int Theory(TheoryArgs args) {
  std::vector<frl::TheoryParams> grid;
  try {
    std::vector<double> alphas{args.alpha}, sigmas{args.sigma}, ns{args.n},
        ks{args.k};
    std::optional<double> mu = args.mu;
    if (!args.sweep.empty()) {
      std::ifstream in(args.sweep);
      if (!in) throw frl::ParameterError("cannot read sweep file " + args.sweep);
      json j;
      try {
        j = json::parse(in);
      } catch (const json::parse_error& e) {
        throw frl::ParameterError(std::string("malformed sweep file: ") + e.what());
      }
      if (!j.is_object()) throw frl::ParameterError("sweep file must hold an object");
      for (const auto& [key, value] : j.items()) {
        static const std::vector<std::string> known{
            "alpha", "sigma", "n", "k", "mu", "clients", "trials", "seed"};
        if (std::find(known.begin(), known.end(), key) == known.end()) {
          throw frl::ParameterError("unknown sweep key '" + key + "'");
        }
      }
      alphas = ReadAxis(j, "alpha", args.alpha);
      sigmas = ReadAxis(j, "sigma", args.sigma);
      ns = ReadAxis(j, "n", args.n);
      ks = ReadAxis(j, "k", args.k);
      if (j.contains("mu")) mu = j.at("mu").get<double>();
      if (j.contains("clients")) args.clients = j.at("clients").get<int>();
      if (j.contains("trials")) args.trials = j.at("trials").get<std::int64_t>();
      if (j.contains("seed")) args.seed = j.at("seed").get<std::uint64_t>();
    }
    if (args.trials <= 0) throw frl::ParameterError("trials must be positive");
    for (double a : alphas) {
      for (double s : sigmas) {
        for (double n : ns) {
          for (double k : ks) {
            frl::TheoryParams p;
            p.alpha = a;
            p.sigma = s;
            p.n = n;
            p.k = k;
            p.mu = mu.value_or(k * n);
            p.clients = args.clients;
            frl::Validate(p);
            grid.push_back(p);
          }
        }
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  std::string csv = "alpha,sigma,n,k,L,U,P_formula,P_mc,stderr\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const frl::TheoryParams& p = grid[i];
    const frl::VulnerableRange range = frl::ComputeVulnerableRange(p);
    std::mt19937_64 rng(frl::DeriveSeed(args.seed, 0x7468, i));
    const frl::McEstimate mc = frl::McCrossingProbability(p, args.trials, rng);
    csv += FormatNumber(p.alpha) + "," + FormatNumber(p.sigma) + "," +
           FormatNumber(p.n) + "," + FormatNumber(p.k) + "," +
           FormatNumber(range.lower) + "," + FormatNumber(range.upper) + "," +
           FormatNumber(frl::SuccessProbability(p)) + "," +
           FormatNumber(mc.estimate) + "," + FormatNumber(mc.std_error) + "\n";
  }
  const std::filesystem::path out =
      args.out.empty() ? DefaultOutDir() : std::filesystem::path(args.out);
  try {
    std::filesystem::create_directories(out);
    std::ofstream f(out / "theory.csv", std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + (out / "theory.csv").string());
    f << csv;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  std::cout << csv;
  return kOk;
}

struct ReportArgs {
  std::vector<std::string> dirs;
  std::optional<double> tau;
  std::optional<std::size_t> window;
  std::string csv;
};

int Report(const ReportArgs& args) {
  std::vector<frl::LoadedRun> runs;
  for (const auto& dir : args.dirs) {
    try {
      runs.push_back(frl::ReadRunLog(dir));
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kUsage;
    }
  }
  std::string csv = "run,attack,aggregator,tau,window,mean_xi,std_xi,final_acc,mean_acc\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const frl::LoadedRun& run = runs[i];
    const json& cfg = run.manifest.value("config", json::object());
    const std::string attack = cfg.value("attack", json::object()).value("kind", "none");
    const std::string agg = cfg.value("aggregator", json::object()).value("kind", "mv");
    std::optional<double> tau = args.tau;
    if (!tau) {
      const json t = cfg.value("attack", json::object()).value("tau", json());
      if (t.is_number()) tau = t.get<double>();
    }
    if (run.acc.empty()) {
      std::cerr << "error: " << args.dirs[i] << " has no rounds\n";
      return kUsage;
    }
    std::size_t window = args.window.value_or(cfg.value("eval_window", std::size_t{50}));
    window = std::min(window, run.acc.size());
    double mean_acc = 0.0;
    for (std::size_t r = run.acc.size() - window; r < run.acc.size(); ++r) {
      mean_acc += run.acc[r];
    }
    mean_acc /= static_cast<double>(window);
    std::cout << args.dirs[i] << "  attack=" << attack << " aggregator=" << agg;
    csv += args.dirs[i] + "," + attack + "," + agg + ",";
    if (tau) {
      const frl::ControlErrorStats st = frl::ControlError(run.acc, *tau, window);
      std::cout << " tau=" << FormatNumber(*tau) << " xi%=" << frl::FormatMeanStd(st)
                << "\n";
      csv += FormatNumber(*tau) + "," + std::to_string(window) + "," +
             FormatNumber(st.mean) + "," + FormatNumber(st.std) + ",";
    } else {
      std::cout << " rounds=" << run.acc.size()
                << " final_acc=" << FormatNumber(run.acc.back())
                << " mean_acc_last_" << window << "=" << FormatNumber(mean_acc)
                << "\n";
      csv += "," + std::to_string(window) + ",,,";
    }
    csv += FormatNumber(run.acc.back()) + "," + FormatNumber(mean_acc) + "\n";
  }
  if (!args.csv.empty()) {
    std::ofstream f(args.csv, std::ios::binary | std::ios::trunc);
    if (!f) {
      std::cerr << "error: cannot write " << args.csv << "\n";
      return kRuntime;
    }
    f << csv;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated rank learning simulator"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run one simulation");
  simulate->add_option("--config,-c", sim.config, "Run configuration (JSON)")->required();
  simulate->add_option("--out,-o", sim.out,
                       "Output directory (default $FRL_OUT_DIR/<config hash>)");
  simulate->add_option("--seed", sim.seed, "Override the config seed");
  simulate->add_flag("-v,--verbose", sim.verbose, "Print per-round progress");

  TheoryArgs th;
  auto* theory = app.add_subcommand("theory", "Vulnerable range and success probability");
  theory->add_option("--alpha", th.alpha, "Malicious fraction");
  theory->add_option("--sigma", th.sigma, "Position spread");
  theory->add_option("--n", th.n, "Edges in the layer");
  theory->add_option("--k", th.k, "Selected fraction");
  theory->add_option("--mu", th.mu, "Position mean (default k n)");
  theory->add_option("--clients", th.clients, "Clients per round");
  theory->add_option("--trials", th.trials, "Monte Carlo trials per point");
  theory->add_option("--seed", th.seed, "Monte Carlo seed");
  theory->add_option("--sweep", th.sweep, "JSON grid of parameter arrays");
  theory->add_option("--out,-o", th.out, "Output directory (default $FRL_OUT_DIR)");

  ReportArgs rep;
  auto* report = app.add_subcommand("report", "Control error across runs");
  report->add_option("run_dirs", rep.dirs, "Run output directories")->required();
  report->add_option("--tau", rep.tau, "Target accuracy (default from manifest)");
  report->add_option("--window", rep.window, "Final rounds to average");
  report->add_option("--csv", rep.csv, "Also write the table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  try {
    if (*simulate) return Simulate(sim);
    if (*theory) return Theory(th);
    if (*report) return Report(rep);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
