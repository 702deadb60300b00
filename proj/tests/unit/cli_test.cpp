#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "run_config.hpp"

namespace metaalign::cli {
namespace {

std::filesystem::path FreshDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("metaalign_cli_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string Slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome Invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = Run(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(RunConfig, TextFormatParses) {
  RunConfig c;
  c.ApplyText("# comment\ninner_steps = 7\n  inner_tau=0.25   # trailing\n\nmetric = mlp\ndistortion = none\n");
  EXPECT_EQ(c.train.inner_steps, 7u);
  EXPECT_EQ(c.train.inner_tau, 0.25);
  EXPECT_EQ(c.train.metric_kind, MetricKind::kMlp);
  EXPECT_EQ(c.synth.distortion, Distortion::kNone);
}

TEST(RunConfig, UnknownKeyNamesLine) {
  RunConfig c;
  try {
    c.ApplyText("inner_steps = 2\ninner_stpes = 3\n", "x.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("inner_stpes"), std::string::npos);
    EXPECT_NE(msg.find("x.cfg:2"), std::string::npos);
  }
}

TEST(RunConfig, MalformedValuesAndDuplicates) {
  RunConfig c;
  EXPECT_THROW(c.Set("inner_steps", "-1"), ConfigError);
  EXPECT_THROW(c.Set("inner_lr", "fast"), ConfigError);
  EXPECT_THROW(c.Set("metric", "euclid"), ConfigError);
  EXPECT_THROW(c.Set("histogram", "maybe"), ConfigError);
  EXPECT_THROW(c.ApplyText("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(c.ApplyText("just words\n"), ConfigError);
  EXPECT_THROW(c.ApplyAssignment("noequals"), ConfigError);
}

TEST(RunConfig, DumpRoundTrips) {
  RunConfig c;
  c.Set("outer_lr", "0.0003");
  c.Set("sweep_values", "10,15,20");
  c.Set("eval_split", "val");
  RunConfig d;
  d.ApplyText(c.Dump());
  EXPECT_EQ(d.Dump(), c.Dump());
  EXPECT_EQ(d.train.outer_lr, 0.0003);
  EXPECT_EQ(d.sweep_values, (std::vector<double>{10, 15, 20}));
  EXPECT_EQ(d.eval_split, Split::kVal);
}

TEST(RunConfig, EveryKeyIsDocumentedAndSettable) {
  for (const auto& k : ConfigKeys()) {
    RunConfig c;
    EXPECT_NO_THROW(c.Set(k.key, k.default_value)) << k.key;
    EXPECT_FALSE(k.doc.empty()) << k.key;
  }
}

TEST(RunConfig, DerivedPaths) {
  RunConfig c;
  c.out_dir = "runs/a";
  EXPECT_EQ(c.CheckpointPath(), std::filesystem::path("runs/a/model.fsmp"));
  EXPECT_EQ(c.LogPath(), std::filesystem::path("runs/a/train_log.csv"));
  c.checkpoint = "m.fsmp";
  EXPECT_EQ(c.CheckpointPath(), std::filesystem::path("m.fsmp"));
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(Invoke({}).code, 2);
  EXPECT_EQ(Invoke({"frobnicate"}).code, 2);
  const auto o = Invoke({"train", "--set", "nope=1"});
  EXPECT_EQ(o.code, 2);
  EXPECT_EQ(o.err.rfind("error: config:", 0), 0u) << o.err;
}

TEST(Cli, MissingDatasetExitsThree) {
  const auto dir = FreshDir("missing");
  const auto o = Invoke({"train", "--set", "dataset=" + (dir / "nope.fseb").string()});
  EXPECT_EQ(o.code, 3);
  EXPECT_EQ(o.err.rfind("error: dataset:", 0), 0u) << o.err;
}

TEST(Cli, CorruptDatasetExitsThree) {
  const auto dir = FreshDir("corrupt");
  std::ofstream(dir / "bad.fseb") << "FSEBgarbage";
  const auto o = Invoke({"train", "--set", "dataset=" + (dir / "bad.fseb").string()});
  EXPECT_EQ(o.code, 3);
  EXPECT_NE(o.err.find("offset"), std::string::npos) << o.err;
}

TEST(Cli, SamplerShortfallExitsFour) {
  const auto dir = FreshDir("sampler");
  const auto ds = (dir / "d.fseb").string();
  ASSERT_EQ(Invoke({"gen-synth", "--set", "dataset=" + ds, "--set", "classes_base=3"}).code, 0);
  const auto o = Invoke({"train", "--set", "dataset=" + ds, "--out", (dir / "o").string()});
  EXPECT_EQ(o.code, 4);
  EXPECT_EQ(o.err.rfind("error: sampler:", 0), 0u) << o.err;
}

TEST(Cli, ConfigKeysListsDefaults) {
  const auto o = Invoke({"config-keys"});
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("inner_tau = 0.2"), std::string::npos);
  EXPECT_NE(o.out.find("outer_lr = 0.001"), std::string::npos);
}

TEST(Cli, EndToEndTrainEvalResume) {
  const auto dir = FreshDir("e2e");
  const auto ds = (dir / "d.fseb").string();
  const auto out = (dir / "run").string();
  const auto cfg = dir / "run.cfg";
  std::ofstream(cfg) << "dataset = " << ds << "\nout = " << out
                     << "\ninner_steps = 2\nepisodes_per_epoch = 4\nm_query = 4\nn_episodes = 6\nhistogram = true\n";
  ASSERT_EQ(Invoke({"--config", cfg.string(), "gen-synth"}).code, 0);
  auto o = Invoke({"--config", cfg.string(), "train"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "model.fsmp"));
  const auto log = Slurp(dir / "run" / "train_log.csv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 5);

  o = Invoke({"--config", cfg.string(), "train", "--set", "epochs=2", "--set", "resume=true"});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto resumed = Slurp(dir / "run" / "train_log.csv");
  EXPECT_EQ(std::count(resumed.begin(), resumed.end(), '\n'), 9);
  EXPECT_EQ(resumed.rfind(log, 0), 0u);

  o = Invoke({"--config", cfg.string(), "eval"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "eval.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "histogram.csv"));

  o = Invoke({"--config", cfg.string(), "ablate"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(Slurp(dir / "run" / "ablate_summary.csv").find("direct_alignment,"), std::string::npos);

  o = Invoke({"--config", cfg.string(), "sweep", "--axis", "inner_steps", "--values", "0,1"});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto sweep = Slurp(dir / "run" / "sweep_inner_steps.csv");
  EXPECT_EQ(sweep.substr(0, sweep.find('\n')), "inner_steps,mean,ci95,n");
}

TEST(Cli, MissingCheckpointExitsThree) {
  const auto dir = FreshDir("nockpt");
  const auto ds = (dir / "d.fseb").string();
  ASSERT_EQ(Invoke({"gen-synth", "--set", "dataset=" + ds}).code, 0);
  const auto o = Invoke({"eval", "--set", "dataset=" + ds, "--out", (dir / "o").string()});
  EXPECT_EQ(o.code, 3);
  EXPECT_EQ(o.err.rfind("error: checkpoint:", 0), 0u) << o.err;
}

}  // namespace
}  // namespace metaalign::cli
