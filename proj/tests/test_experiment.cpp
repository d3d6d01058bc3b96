#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mfg/experiment.hpp"
#include "mfg/common.hpp"

using namespace mfg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mfg_experiment_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

fs::path dir_of(const std::string& name) { return fs::temp_directory_path() / ("mfg_experiment_test_" + name); }

json manifest_of(const fs::path& dir) { return json::parse(slurp(dir / "manifest.json")); }

ExperimentResult run(const std::string& name, json config, int workers = 0) {
  ExperimentOptions o;
  o.config = std::move(config);
  o.out_dir = scratch_dir(name).string();
  o.workers = workers;
  return run_experiment(o);
}

json oracle_config() {
  return {{"mode", "oracle"}, {"seed", 1}, {"game", "discrete-oracle"}, {"oracle", {{"steps", 2}, {"dt", 0.5}}}};
}

}  // namespace

TEST(GitBlob, KnownHashes) {
  EXPECT_EQ(git_blob_sha1(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_sha1("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Config, UnknownFieldNamesThePath) {
  json c = oracle_config();
  c["oracle"]["bogus"] = 1;
  const ExperimentResult r = run("unknown", c);
  EXPECT_EQ(r.exit_code, kExitError);
  EXPECT_NE(r.message.find("oracle.bogus"), std::string::npos) << r.message;
  const json m = manifest_of(dir_of("unknown"));
  EXPECT_EQ(m["status"], "error");
  EXPECT_EQ(m["exit_code"], kExitError);
}

TEST(Config, MissingSeed) {
  json c = oracle_config();
  c.erase("seed");
  const ExperimentResult r = run("noseed", c);
  EXPECT_EQ(r.exit_code, kExitError);
  EXPECT_NE(r.message.find("seed"), std::string::npos);
}

TEST(Config, WrongTypeAndUnknownGame) {
  json c = oracle_config();
  c["seed"] = "eleven";
  EXPECT_EQ(run("badtype", c).exit_code, kExitError);
  c = oracle_config();
  c["game"] = "nonexistent";
  EXPECT_EQ(run("badgame", c).exit_code, kExitError);
  c = oracle_config();
  c["game"] = {{"name", "discrete-oracle"}, {"bogus", 1}};
  const ExperimentResult r = run("badoverride", c);
  EXPECT_EQ(r.exit_code, kExitError);
  EXPECT_NE(r.message.find("bogus"), std::string::npos) << r.message;
}

TEST(Config, UnknownMode) {
  json c = oracle_config();
  c["mode"] = "dance";
  EXPECT_EQ(run("badmode", c).exit_code, kExitError);
}

TEST(Config, HorizonBeyondEnsembleIsAnError) {
  const json c = {{"mode", "finite-solve"}, {"seed", 3}, {"game", "gaussian-repulsion"},
                  {"N", 200},           {"T", 8.0},  {"T_max", 4.0}};
  const ExperimentResult r = run("tmax", c);
  EXPECT_EQ(r.exit_code, kExitError);
  EXPECT_NE(r.message.find("T_max"), std::string::npos) << r.message;
}

TEST(Config, LoadFileErrors) {
  EXPECT_THROW(load_config_file("/nonexistent/config.json"), ConfigError);
  const fs::path p = fs::temp_directory_path() / "mfg_bad_config.json";
  std::ofstream(p) << "{ not json";
  EXPECT_THROW(load_config_file(p.string()), ConfigError);
}

TEST(Oracle, RerunIsByteIdentical) {
  const ExperimentResult a = run("oracle_a", oracle_config());
  const ExperimentResult b = run("oracle_b", oracle_config());
  ASSERT_EQ(a.exit_code, kExitOk) << a.message;
  EXPECT_EQ(a.outputs, std::vector<std::string>{"oracle.csv"});
  const fs::path da = dir_of("oracle_a"), db = dir_of("oracle_b");
  EXPECT_EQ(slurp(da / "oracle.csv"), slurp(db / "oracle.csv"));
  const json ma = manifest_of(da), mb = manifest_of(db);
  EXPECT_EQ(ma["content_hash"], mb["content_hash"]);
  EXPECT_EQ(ma["outputs"]["oracle.csv"], git_blob_sha1(slurp(da / "oracle.csv")));
  EXPECT_EQ(ma["summary"]["equilibria"].size(), 1u);
}

TEST(Check, GaussianRepulsionPassesEverything) {
  const fs::path dir = scratch_dir("check");
  ExperimentOptions o;
  o.config = {{"mode", "check"}, {"seed", 11}, {"game", "gaussian-repulsion"}};
  o.out_dir = dir.string();
  const ExperimentResult r = run_experiment(o);
  ASSERT_EQ(r.exit_code, kExitOk) << r.message;
  const json a = json::parse(slurp(dir / "assumptions.json"));
  ASSERT_FALSE(a["standing"]["entries"].empty());
  for (const auto& e : a["standing"]["entries"]) EXPECT_NE(e["status"], "fail") << e.dump();
  EXPECT_EQ(a["monotonicity"]["status"], "pass");
  EXPECT_EQ(a["strong_concavity"]["status"], "pass");
  EXPECT_TRUE(a.contains("game"));
}

TEST(Check, NonMonotoneGameIsFlagged) {
  const json c = {{"mode", "check"},
                  {"seed", 11},
                  {"game", {{"name", "gaussian-repulsion"}, {"repulsion", -0.2}}}};
  EXPECT_EQ(run("check_bad", c).exit_code, kExitFlagged);
}

TEST(Seed, OverrideReplacesConfigSeed) {
  const fs::path dir = scratch_dir("seed");
  ExperimentOptions o;
  o.config = oracle_config();
  o.config.erase("seed");
  o.seed = 42;
  o.out_dir = dir.string();
  EXPECT_EQ(run_experiment(o).exit_code, kExitOk);
  EXPECT_EQ(manifest_of(dir)["seed"], 42);
}

TEST(Solve, OutputsIndependentOfWorkerCount) {
  const json c = {{"mode", "finite-solve"}, {"seed", 5}, {"game", "gaussian-repulsion"}, {"N", 400}, {"T", 3.0}};
  const int before = worker_count();
  const ExperimentResult a = run("w1", c, 1);
  const ExperimentResult b = run("w3", c, 3);
  set_worker_count(before);
  ASSERT_EQ(a.exit_code, kExitOk) << a.message;
  const fs::path d1 = dir_of("w1");
  const json m1 = manifest_of(d1), m3 = manifest_of(dir_of("w3"));
  EXPECT_EQ(m1["outputs"], m3["outputs"]);
  EXPECT_EQ(m1["content_hash"], m3["content_hash"]);
  EXPECT_TRUE(m1["summary"].contains("epsilon_bound"));
  EXPECT_EQ(m1["workers"], 1);
  EXPECT_EQ(m3["workers"], 3);
  const std::string residuals = slurp(d1 / "residuals.csv");
  EXPECT_EQ(residuals.substr(0, residuals.find('\n')), "iter,tv_residual,w1_residual,V,theta");
}

TEST(Sweep, RowsPerSliceAndSlopes) {
  const fs::path dir = scratch_dir("sweep");
  ExperimentOptions o;
  o.config = {{"mode", "sweep"}, {"seed", 2}, {"game", "gaussian-repulsion"}, {"N", 1000},
              {"horizons", {4, 6, 8, 12}}, {"t_slices", {1, 2}}, {"tol_fp", 1e-3}};
  o.out_dir = dir.string();
  const ExperimentResult r = run_experiment(o);
  ASSERT_NE(r.exit_code, kExitError) << r.message;
  std::istringstream csv(slurp(dir / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  std::map<std::string, int> per_slice;
  int rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream ls(line);
    std::string horizon, t;
    std::getline(ls, horizon, ',');
    std::getline(ls, t, ',');
    ++per_slice[t];
    ++rows;
  }
  EXPECT_EQ(rows, 8);
  for (const auto& [t, n] : per_slice) EXPECT_EQ(n, 4) << t;
  const json m = manifest_of(dir);
  ASSERT_EQ(m["summary"]["slopes"].size(), 2u);
  for (const auto& s : m["summary"]["slopes"]) EXPECT_LT(s["tv_slope"].get<double>(), 0.0);
  EXPECT_TRUE(m["summary"]["applicable"].get<bool>());
}

TEST(Stationary, ConstantActionComparesWithQuadrature) {
  const fs::path dir = scratch_dir("stationary");
  ExperimentOptions o;
  o.config = {{"mode", "stationary"},
              {"seed", 4},
              {"game", "clipped-ou-invariant"},
              {"stationary", {{"T", 16.0}, {"paths", 2000}, {"constant_action", 0.0}}}};
  o.out_dir = dir.string();
  const ExperimentResult r = run_experiment(o);
  ASSERT_EQ(r.exit_code, kExitOk) << r.message;
  const json m = manifest_of(dir);
  EXPECT_NEAR(m["summary"]["estimate"]["second_moment"].get<double>(), 0.5, 0.05);
  EXPECT_TRUE(m["outputs"].contains("stationary.csv"));
}
