#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "frl/simulation.hpp"

namespace frl {

namespace {

using nlohmann::json;

json OptionalJson(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

json RecordJson(const RoundRecord& r) {
  json j;
  j["round"] = r.round;
  j["acc"] = r.acc;
  j["xi"] = OptionalJson(r.xi);
  j["mask_flips"] = r.mask_flips;
  j["boundary_gap"] = r.boundary_gap;
  j["boundary_gap_mean"] = r.boundary_gap_mean;
  j["attack_active"] = r.attack_active;
  j["malicious_selected"] = r.malicious_selected;
  j["removed"] = r.removed;
  j["attacker_acc"] = OptionalJson(r.attacker_acc);
  j["epsilon"] = OptionalJson(r.epsilon);
  return j;
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double ParseDouble(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("bad number '" + s + "' in rounds.csv");
  }
  return v;
}

std::size_t ParseSize(const std::string& s) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("bad integer '" + s + "' in rounds.csv");
  }
  return v;
}

constexpr const char* kHeader = "round,acc,xi,mask_flips,boundary_gap_mean,attack_active";

}  // namespace

std::string FormatNumber(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string FormatMeanStd(const ControlErrorStats& stats) {
  char a[64];
  char b[64];
  const auto ra = std::to_chars(a, a + sizeof(a), stats.mean * 100.0,
                                std::chars_format::fixed, 2);
  const auto rb = std::to_chars(b, b + sizeof(b), stats.std * 100.0,
                                std::chars_format::fixed, 2);
  return std::string(a, ra.ptr) + " (±" + std::string(b, rb.ptr) + ")";
}

json RunLog::Manifest() const {
  json j;
  j["config"] = ToJson(config);
  j["seed"] = config.seed;
  j["config_hash"] = config_hash;
  j["total_edges"] = total_edges;
  j["attack_start_round"] =
      attack_start_round ? json(*attack_start_round) : json(nullptr);
  j["trigger_fired"] = trigger_fired;
  j["aborted"] = aborted;
  j["error"] = error;
  json s;
  s["rounds"] = summary.rounds;
  s["final_acc"] = summary.final_acc;
  s["mean_xi"] = OptionalJson(summary.mean_xi);
  s["std_xi"] = OptionalJson(summary.std_xi);
  s["max_xi"] = OptionalJson(summary.max_xi);
  s["mean_flip_fraction"] = summary.mean_flip_fraction;
  j["summary"] = s;
  return j;
}

std::string RoundsCsv(const RunLog& log) {
  std::string out = kHeader;
  out += '\n';
  for (const auto& r : log.records) {
    out += std::to_string(r.round);
    out += ',';
    out += FormatNumber(r.acc);
    out += ',';
    if (r.xi) out += FormatNumber(*r.xi);
    out += ',';
    out += std::to_string(r.mask_flips);
    out += ',';
    out += FormatNumber(r.boundary_gap_mean);
    out += ',';
    out += r.attack_active ? '1' : '0';
    out += '\n';
  }
  return out;
}

void WriteRunLog(const RunLog& log, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  };
  write("rounds.csv", RoundsCsv(log));
  std::string details;
  for (const auto& r : log.records) details += RecordJson(r).dump() + "\n";
  write("records.jsonl", details);
  write("manifest.json", log.Manifest().dump(2) + "\n");
}

LoadedRun ReadRunLog(const std::filesystem::path& dir) {
  LoadedRun run;
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("missing " + (dir / "manifest.json").string());
  try {
    run.manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed manifest.json: " + std::string(e.what()));
  }
  std::ifstream rf(dir / "rounds.csv");
  if (!rf) throw std::runtime_error("missing " + (dir / "rounds.csv").string());
  std::string line;
  if (!std::getline(rf, line) || line != kHeader) {
    throw std::runtime_error("rounds.csv has an unexpected header");
  }
  while (std::getline(rf, line)) {
    if (line.empty()) continue;
    const auto cells = SplitCsvLine(line);
    if (cells.size() != 6) throw std::runtime_error("rounds.csv row has wrong width");
    run.rounds.push_back(ParseSize(cells[0]));
    run.acc.push_back(ParseDouble(cells[1]));
    run.xi.push_back(cells[2].empty() ? std::nullopt
                                      : std::optional<double>(ParseDouble(cells[2])));
    run.mask_flips.push_back(ParseSize(cells[3]));
    run.boundary_gap_mean.push_back(ParseDouble(cells[4]));
    run.attack_active.push_back(cells[5] == "1");
  }
  return run;
}

}  // namespace frl
