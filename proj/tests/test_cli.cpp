#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("rdctl_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path write_config(const std::string& name, const json& j) {
  const fs::path p = scratch() / (name + ".json");
  std::ofstream(p) << j.dump(2);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(RDCTL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::map<std::string, std::string> directory_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

json small_config() {
  return {{"model", {{"modes", 8}}},
          {"sde", {{"horizon", 2.0}, {"steps", 40}}},
          {"riccati", {{"steps", 50}}},
          {"evaluation", {{"samples", 20}}},
          {"seed", 11}};
}

}  // namespace

TEST(Cli, HashOracleMatchesPublishedVector) { EXPECT_EQ(fnv1a64_hex("a"), "af63dc4c8601ec8c"); }

TEST(Cli, RiccatiOutputsAreByteDeterministic) {
  const fs::path cfg = write_config("riccati", small_config());
  const fs::path a = scratch() / "riccati_a";
  const fs::path b = scratch() / "riccati_b";
  ASSERT_EQ(run("riccati --config " + cfg.string() + " --out " + a.string()), 0);
  ASSERT_EQ(run("riccati --config " + cfg.string() + " --out " + b.string()), 0);
  const auto fa = directory_bytes(a);
  EXPECT_EQ(fa, directory_bytes(b));
  for (const char* name : {"gains.csv", "policy.txt", "cost.csv", "resolved_config.json", "manifest.json"}) {
    EXPECT_TRUE(fa.count(name)) << name;
  }
  // One header plus one row per grid time and mode.
  EXPECT_EQ(count_lines(fa.at("gains.csv")), 1 + 51 * 8);
  EXPECT_EQ(count_lines(fa.at("cost.csv")), 3);
}

TEST(Cli, ManifestListsEveryOutputWithItsHash) {
  const fs::path cfg = write_config("manifest", small_config());
  const fs::path out = scratch() / "manifest";
  ASSERT_EQ(run("eval-cost --config " + cfg.string() + " --out " + out.string()), 0);
  const json m = json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m["command"], "eval-cost");
  EXPECT_EQ(m["seed"].get<std::uint64_t>(), 11u);
  int listed = 0;
  for (const auto& f : m["files"]) {
    const std::string bytes = slurp(out / f["name"].get<std::string>());
    EXPECT_EQ(f["bytes"].get<std::size_t>(), bytes.size());
    EXPECT_EQ(f["fnv1a64"], fnv1a64_hex(bytes));
    ++listed;
  }
  EXPECT_EQ(listed + 1, static_cast<int>(directory_bytes(out).size()));
}

TEST(Cli, ThreadCountDoesNotChangeCosts) {
  const fs::path cfg = write_config("threads", small_config());
  const fs::path a = scratch() / "threads_1";
  const fs::path b = scratch() / "threads_3";
  ASSERT_EQ(run("eval-cost --config " + cfg.string() + " --threads 1 --out " + a.string()), 0);
  ASSERT_EQ(run("eval-cost --config " + cfg.string() + " --threads 3 --out " + b.string()), 0);
  EXPECT_EQ(slurp(a / "cost.csv"), slurp(b / "cost.csv"));
}

TEST(Cli, SeedOverrideChangesNoiseOnly) {
  const fs::path cfg = write_config("seed", small_config());
  const fs::path a = scratch() / "seed_a";
  const fs::path b = scratch() / "seed_b";
  ASSERT_EQ(run("eval-cost --config " + cfg.string() + " --out " + a.string()), 0);
  ASSERT_EQ(run("eval-cost --config " + cfg.string() + " --seed 12 --out " + b.string()), 0);
  EXPECT_NE(slurp(a / "cost.csv"), slurp(b / "cost.csv"));
  EXPECT_EQ(json::parse(slurp(b / "resolved_config.json"))["seed"].get<std::uint64_t>(), 12u);
}

TEST(Cli, TrainWritesHistoryCheckpointsAndPolicy) {
  json j = small_config();
  j["model"]["modes"] = 4;
  j["policy"] = {{"neurons", 6}, {"activation", "tanh"}};
  j["train"] = {{"iterations", 6}, {"checkpoint_every", 3}, {"steps", 10}, {"batch_size", 4}};
  j["evaluation"]["samples"] = 8;
  const fs::path cfg = write_config("train", j);
  const fs::path a = scratch() / "train_a";
  const fs::path b = scratch() / "train_b";
  ASSERT_EQ(run("train --config " + cfg.string() + " --out " + a.string()), 0);
  ASSERT_EQ(run("train --config " + cfg.string() + " --out " + b.string()), 0);
  const auto fa = directory_bytes(a);
  EXPECT_EQ(fa, directory_bytes(b));
  EXPECT_EQ(count_lines(fa.at("loss.csv")), 7);
  EXPECT_TRUE(fa.count("policy.txt"));
  EXPECT_TRUE(fa.count("checkpoints/checkpoint_000003.txt"));
  EXPECT_TRUE(fa.count("checkpoints/checkpoint_000006.txt"));
  EXPECT_EQ(count_lines(fa.at("cost.csv")), 4);

  json resume = j;
  resume["policy"] = {{"kind", "file"}, {"path", (a / "policy.txt").string()}};
  resume["train"]["iterations"] = 1;
  resume["train"]["checkpoint_every"] = 0;
  const fs::path cfg2 = write_config("train_resume", resume);
  EXPECT_EQ(run("train --config " + cfg2.string() + " --out " + (scratch() / "train_c").string()), 0);
}

TEST(Cli, SimulateAndSweepProduceTables) {
  json j = small_config();
  j["policy"] = {{"kind", "zero"}};
  j["simulate"] = {{"samples", 2}, {"grid_points", 11}, {"time_stride", 10}};
  j["sweep"] = {{"kind", "finitely_based"}, {"values", {1, 2, 4}}, {"samples", 50}};
  const fs::path cfg = write_config("simulate", j);
  const fs::path sim = scratch() / "simulate";
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + sim.string()), 0);
  const auto fs_sim = directory_bytes(sim);
  // Five stored times (0, 10, 20, 30, 40) on eleven points plus the header.
  EXPECT_EQ(count_lines(fs_sim.at("field_0.csv")), 1 + 5 * 11);
  EXPECT_EQ(count_lines(fs_sim.at("coefficients_1.csv")), 1 + 5 * 8);
  EXPECT_EQ(count_lines(fs_sim.at("path_costs.csv")), 3);
  const fs::path sweep = scratch() / "sweep";
  ASSERT_EQ(run("sweep --config " + cfg.string() + " --out " + sweep.string()), 0);
  EXPECT_EQ(count_lines(slurp(sweep / "sweep.csv")), 4);
  EXPECT_EQ(slurp(sweep / "sweep.csv").rfind("finitely_based_decay:modes,error,std_error\n", 0), 0u);
  EXPECT_EQ(count_lines(slurp(sweep / "fit.csv")), 2);
}

TEST(Cli, ConfigurationErrorsExitWithTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("explode"), 2);
  EXPECT_EQ(run("riccati --bogus"), 2);
  EXPECT_EQ(run("riccati --config " + (scratch() / "absent.json").string()), 2);
  const fs::path unknown = write_config("unknown", json{{"model", {{"nodes", 3}}}});
  EXPECT_EQ(run("riccati --config " + unknown.string() + " --out " + (scratch() / "x").string()), 2);
  const fs::path range = write_config("range", json{{"evaluation", {{"samples", 1}}}});
  EXPECT_EQ(run("eval-cost --config " + range.string() + " --out " + (scratch() / "y").string()), 2);
}

TEST(Cli, NumericBlowUpExitsWithThree) {
  json j = small_config();
  j["sde"] = {{"horizon", 20.0}, {"steps", 200}, {"nonlinearity", {{"kind", "linear"}, {"c", 1000.0}}}};
  j["policy"] = {{"kind", "zero"}};
  const fs::path cfg = write_config("blowup", j);
  EXPECT_EQ(run("eval-cost --config " + cfg.string() + " --out " + (scratch() / "blowup").string()), 3);
}
