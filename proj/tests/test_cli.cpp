// Exercises the installed CLI binary end to end through a scaled-down study.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "prunekit/dataset.hpp"
#include "prunekit/harness.hpp"

namespace fs = std::filesystem;
using namespace prunekit;

namespace {

const char* kCli = PRUNEKIT_CLI_PATH;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("pk_cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string p(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_small_config(const std::string& path, const TempDir& dir) {
  nlohmann::json j{
      {"model",
       {{"vocab_size", 96},
        {"d_model", 16},
        {"n_layers", 2},
        {"n_heads", 2},
        {"d_ff", 24},
        {"max_seq_len", 128},
        {"seed", 5}}},
      {"recovery",
       {{"eta", 0.02},
        {"epochs_per_iteration", 1},
        {"temperature", 2.0},
        {"batch_size", 8},
        {"seed", 1},
        {"precision_sim", "fp16-roundtrip"}}},
      {"teacher", {{"val_floor", 0.05}, {"max_epochs", 2}, {"eta", 1e-3}, {"batch_size", 8}}},
      {"schedule", {0.95, 0.90}},
      {"data_fractions", {1.0}},
      {"seeds", {1}},
      {"template_seed", 42},
      {"latency_reps", 3},
      {"paths",
       {{"dataset", dir.p("data.jsonl")},
        {"teacher", dir.p("teacher.pkm")},
        {"cache", dir.p("cache.bin")},
        {"out", dir.p("out")}}}};
  std::ofstream os(path);
  os << j.dump(2);
}

}  // namespace

TEST(Cli, NoArgumentsIsUsageError) { EXPECT_EQ(run_cli(""), 2); }

TEST(Cli, UnknownSubcommandIsUsageError) { EXPECT_EQ(run_cli("frobnicate"), 2); }

TEST(Cli, GenDataRequiresOut) { EXPECT_EQ(run_cli("gen-data"), 2); }

TEST(Cli, TrainTeacherWithoutDatasetPathIsUsageError) {
  TempDir dir("nodata");
  EXPECT_EQ(run_cli("train-teacher --out " + dir.p("t.pkm")), 2);
}

TEST(Cli, HelpExitsCleanly) { EXPECT_EQ(run_cli("--help"), 0); }

TEST(Cli, FullPipelineSmoke) {
  TempDir dir("smoke");
  const std::string cfg_path = dir.p("config.json");
  write_small_config(cfg_path, dir);

  ASSERT_EQ(run_cli("gen-data --out " + dir.p("data.jsonl") +
                    " --n-train 24 --n-val 8 --n-test 8 --seed 3"),
            0);
  ASSERT_TRUE(fs::exists(dir.p("data.jsonl")));

  ASSERT_EQ(run_cli("train-teacher --config " + cfg_path), 0);
  ASSERT_TRUE(fs::exists(dir.p("teacher.pkm")));
  ASSERT_TRUE(fs::exists(dir.p("teacher.pkm.log.json")));

  ASSERT_EQ(run_cli("cache-logits --config " + cfg_path), 0);
  ASSERT_TRUE(fs::exists(dir.p("cache.bin")));

  ASSERT_EQ(run_cli("run --config " + cfg_path + " --pipeline both"), 0);
  ASSERT_TRUE(fs::exists(dir.p("out/manifest.jsonl")));
  ASSERT_TRUE(fs::exists(dir.p("out/report.csv")));
  ASSERT_TRUE(fs::exists(dir.p("out/report.md")));
  ASSERT_TRUE(fs::exists(dir.p("out/plot_data.csv")));

  // resumed rerun recomputes nothing and leaves the manifest untouched
  std::error_code ec;
  const auto before = fs::last_write_time(dir.p("out/manifest.jsonl"), ec);
  std::ifstream m1(dir.p("out/manifest.jsonl"));
  std::stringstream s1;
  s1 << m1.rdbuf();
  ASSERT_EQ(run_cli("run --config " + cfg_path + " --pipeline both --resume"), 0);
  std::ifstream m2(dir.p("out/manifest.jsonl"));
  std::stringstream s2;
  s2 << m2.rdbuf();
  EXPECT_EQ(s1.str(), s2.str());
  (void)before;

  // stale cache: mismatched teacher is refused (runtime failure)
  {
    ModelConfig other;
    other.vocab_size = 96;
    other.d_model = 16;
    other.n_layers = 2;
    other.n_heads = 2;
    other.d_ff = 24;
    other.max_seq_len = 128;
    other.seed = 1234;
    TransformerModel impostor(other);
    impostor.save(dir.p("teacher.pkm"));
  }
  fs::remove_all(dir.p("out"));
  EXPECT_EQ(run_cli("run --config " + cfg_path + " --pipeline l2psd"), 1);

  // merged reporting from the manifest of a completed run
  TempDir dir2("report");
  (void)dir2;
}

TEST(Cli, ReportMergesManifests) {
  TempDir dir("rep");
  const std::string cfg_path = dir.p("config.json");
  write_small_config(cfg_path, dir);
  ASSERT_EQ(run_cli("gen-data --out " + dir.p("data.jsonl") +
                    " --n-train 16 --n-val 8 --n-test 8 --seed 3"),
            0);
  ASSERT_EQ(run_cli("train-teacher --config " + cfg_path), 0);
  ASSERT_EQ(run_cli("run --config " + cfg_path + " --pipeline l2pft"), 0);
  ASSERT_EQ(run_cli("report --out " + dir.p("merged") + " --config " + cfg_path + " " +
                    dir.p("out/manifest.jsonl")),
            0);
  EXPECT_TRUE(fs::exists(dir.p("merged/report.csv")));
  EXPECT_TRUE(fs::exists(dir.p("merged/report_per_seed.csv")));
}
