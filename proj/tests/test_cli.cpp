#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gtest/gtest.h"

namespace {

namespace fs = std::filesystem;

struct Result {
  int status = -1;
  std::string out;  // stdout and stderr interleaved
};

Result Cli(const std::string& args) {
  const std::string cmd = std::string(FRL_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("frl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  fs::path Write(const std::string& name, const std::string& body) {
    std::ofstream(dir_ / name) << body;
    return dir_ / name;
  }

  fs::path SmallConfig() {
    return Write("small.json", R"({
  "seed": 4,
  "num_clients": 8,
  "clients_per_round": 4,
  "malicious_fraction": 0.0,
  "rounds": 3,
  "arch": [5, 6, 3],
  "dataset": {"kind": "synthetic", "num_classes": 3, "dim": 5, "samples_per_class": 80},
  "train": {"epochs": 1},
  "eval_window": 2
}
)");
  }

  fs::path dir_;
};

TEST_F(CliTest, MissingConfigExitsTwo) {
  const Result r = Cli("simulate --config " + (dir_ / "absent.json").string());
  EXPECT_EQ(r.status, 2) << r.out;
}

TEST_F(CliTest, NoSubcommandOrBadFlagExitsTwo) {
  EXPECT_EQ(Cli("").status, 2);
  EXPECT_EQ(Cli("simulate --bogus").status, 2);
}

TEST_F(CliTest, SimulateWritesLogsAndKeepsConfig) {
  const fs::path cfg = SmallConfig();
  const std::string before = Slurp(cfg);
  const Result r = Cli("simulate -c " + cfg.string() + " -o " + (dir_ / "a").string());
  ASSERT_EQ(r.status, 0) << r.out;
  const std::string csv = Slurp(dir_ / "a" / "rounds.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "round,acc,xi,mask_flips,boundary_gap_mean,attack_active");
  EXPECT_TRUE(fs::exists(dir_ / "a" / "manifest.json"));
  EXPECT_EQ(Slurp(cfg), before);

  ASSERT_EQ(Cli("simulate -c " + cfg.string() + " -o " + (dir_ / "b").string()).status, 0);
  EXPECT_EQ(Slurp(dir_ / "b" / "rounds.csv"), csv);
}

TEST_F(CliTest, SeedOverrideChangesHash) {
  const fs::path cfg = SmallConfig();
  ASSERT_EQ(Cli("simulate -c " + cfg.string() + " -o " + (dir_ / "a").string()).status, 0);
  ASSERT_EQ(Cli("simulate -c " + cfg.string() + " --seed 99 -o " + (dir_ / "b").string()).status,
            0);
  const std::string a = Slurp(dir_ / "a" / "manifest.json");
  const std::string b = Slurp(dir_ / "b" / "manifest.json");
  const auto hash = [](const std::string& m) {
    const auto at = m.find("\"config_hash\"");
    return m.substr(at, 40);
  };
  EXPECT_NE(hash(a), hash(b));
}

TEST_F(CliTest, InvalidConfigListsLines) {
  const fs::path cfg = Write("bad.json", "{\n  \"k\": 2.0,\n  \"extra\": true\n}\n");
  const Result r = Cli("simulate -c " + cfg.string());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("bad.json:2:"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("bad.json:3:"), std::string::npos) << r.out;
}

TEST_F(CliTest, TheorySinglePoint) {
  const Result r = Cli("theory --alpha 0.5 --k 0.5 --n 1000 --sigma 100 --trials 1000 -o " +
                       dir_.string());
  ASSERT_EQ(r.status, 0) << r.out;
  const std::string csv = Slurp(dir_ / "theory.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "alpha,sigma,n,k,L,U,P_formula,P_mc,stderr");
  EXPECT_NE(csv.find("\n0.5,100,1000,0.5,1,1000,"), std::string::npos) << csv;
}

TEST_F(CliTest, TheoryInvalidGridExitsTwo) {
  EXPECT_EQ(Cli("theory --alpha 1.0 -o " + dir_.string()).status, 2);
  const fs::path sweep = Write("sweep.json", R"({"alpha": [0.1, 0.2], "sigmas": [1]})");
  EXPECT_EQ(Cli("theory --sweep " + sweep.string() + " -o " + dir_.string()).status, 2);
}

TEST_F(CliTest, TheorySweepRows) {
  const fs::path sweep =
      Write("sweep.json", R"({"alpha": [0.05, 0.1, 0.2], "sigma": [250, 500], "n": 10000, "trials": 2000})");
  const Result r = Cli("theory --sweep " + sweep.string() + " -o " + dir_.string());
  ASSERT_EQ(r.status, 0) << r.out;
  const std::string csv = Slurp(dir_ / "theory.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST_F(CliTest, Report) {
  EXPECT_EQ(Cli("report " + (dir_ / "none").string()).status, 2);
  const fs::path cfg = SmallConfig();
  ASSERT_EQ(Cli("simulate -c " + cfg.string() + " -o " + (dir_ / "a").string()).status, 0);
  const Result r = Cli("report " + (dir_ / "a").string() + " --csv " +
                       (dir_ / "table.csv").string());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("aggregator=mv"), std::string::npos) << r.out;
  const Result t = Cli("report " + (dir_ / "a").string() + " --tau 0.5");
  ASSERT_EQ(t.status, 0) << t.out;
  EXPECT_NE(t.out.find("xi%="), std::string::npos) << t.out;
  EXPECT_EQ(Slurp(dir_ / "table.csv").substr(0, 3), "run");
}

}  // namespace
