#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "metadiff/binary_io.hpp"
#include "metadiff/checkpoint.hpp"
#include "metadiff/dataset.hpp"
#include "metadiff/eval.hpp"
#include "metadiff/grid.hpp"
#include "test_support.hpp"

using namespace metadiff;
using metadiff::testing::TempDir;
using nlohmann::json;

namespace {

struct CliResult {
  int code;
  std::string out, err;
  json header() const {
    const std::string first = out.substr(0, out.find('\n'));
    return json::parse(first);
  }
};

CliResult invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "metadiff");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Exit status of the real executable, for process-level behaviour.
int exec(const std::string& args) {
  const std::string cmd = std::string(METADIFF_CLI_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string slurp(const std::string& path) {
  const auto b = read_file(path);
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

const char* kTinyModel = R"({"model": {"channel_widths": [4, 8], "bottleneck_dim": 8,
  "time_embed_dim": 8, "cond_embed_dim": 8}})";

// Dataset of 8x8 grids and a one-epoch tiny model, shared by the tests below.
class CliRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    ASSERT_EQ(invoke({"gen-data", "--n", "40", "--size", "8", "--seed", "3", "--out", dir_->str("d")}).code, 0);
    write(dir_->str("tiny.json"), kTinyModel);
    const CliResult r = invoke({"train", "--config", dir_->str("tiny.json"), "--data", dir_->str("d"), "--out",
                       dir_->str("run"), "--epochs", "1", "--timesteps", "10", "--val-cap", "4"});
    ASSERT_EQ(r.code, 0) << r.err;
    json cond = json::object();
    const Dataset ds = load_dataset(dir_->str("d"));
    const ConditionVector& c = ds.split(Split::kTest).front().condition;
    cond["spectral"] = std::vector<double>(c.spectral().begin(), c.spectral().end());
    const ExtraParams e = c.extras();
    cond["w1"] = e.w1;
    cond["h2"] = e.h2;
    cond["n2"] = e.n2;
    write(dir_->str("cond.json"), cond.dump());
  }
  static void TearDownTestSuite() { delete dir_; }
  static std::string p(const std::string& child) { return dir_->str(child); }
  static TempDir* dir_;
};
TempDir* CliRun::dir_ = nullptr;

}  // namespace

TEST(Cli, HelpOnEveryCommandExitsZero) {
  EXPECT_EQ(exec("--help"), 0);
  for (const char* c : {"gen-data", "train", "sample", "eval", "inspect"}) {
    EXPECT_EQ(exec(std::string(c) + " --help"), 0) << c;
    const CliResult r = invoke({c, "--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("Usage"), std::string::npos) << c;
  }
}

TEST(Cli, BadArgumentsExitTwo) {
  EXPECT_EQ(exec(""), 2);
  EXPECT_EQ(exec("gen-data --n notanumber --out x"), 2);
  EXPECT_EQ(exec("sample --count 1"), 2);
  EXPECT_EQ(invoke({"--threads", "0", "inspect", "."}).code, 2);
}

TEST(Cli, GenDataWritesFilesAndRejectsTooFewSamples) {
  TempDir t("gen");
  const CliResult ok = invoke({"gen-data", "--n", "10", "--size", "16", "--seed", "1", "--out", t.str("d")});
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_TRUE(std::filesystem::exists(t.str("d/dataset.mdif")));
  EXPECT_TRUE(std::filesystem::exists(t.str("d/manifest.json")));
  EXPECT_EQ(ok.header()["command"], "gen-data");
  EXPECT_EQ(ok.header()["config"]["gen"]["n"], 10);

  const CliResult few = invoke({"gen-data", "--n", "5", "--out", t.str("e")});
  EXPECT_EQ(few.code, 2);
  EXPECT_NE(few.err.find("n:"), std::string::npos) << few.err;
  EXPECT_FALSE(std::filesystem::exists(t.str("e")));
}

TEST(Cli, GenDataIsDeterministic) {
  TempDir t("gen_det");
  for (const char* out : {"a", "b"}) {
    ASSERT_EQ(invoke({"gen-data", "--n", "30", "--size", "8", "--seed", "9", "--proxy-seed", "11",
                   "--out", t.str(out)})
                  .code,
              0);
  }
  EXPECT_EQ(read_file(t.str("a/dataset.mdif")), read_file(t.str("b/dataset.mdif")));
  EXPECT_EQ(read_file(t.str("a/manifest.json")), read_file(t.str("b/manifest.json")));
  EXPECT_EQ(load_dataset(t.str("a")).manifest.proxy_seed, 11u);
}

TEST(Cli, ConfigFileWithFlagOverrides) {
  TempDir t("cfg");
  write(t.str("c.json"), R"({"out": "ignored", "gen": {"n": 12, "size": 8, "seed": 4}})");
  const CliResult r = invoke({"gen-data", "--config", t.str("c.json"), "--n", "20", "--out", t.str("d")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json cfg = r.header()["config"];
  EXPECT_EQ(cfg["gen"]["n"], 20);
  EXPECT_EQ(cfg["gen"]["seed"], 4);
  EXPECT_EQ(cfg["out"], t.str("d"));
  EXPECT_EQ(load_dataset(t.str("d")).manifest.total, 20u);

  write(t.str("bad.json"), R"({"gen": {"n": 12, "colour": 1}})");
  CliResult bad = invoke({"gen-data", "--config", t.str("bad.json"), "--out", t.str("x")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("gen.colour"), std::string::npos) << bad.err;

  write(t.str("type.json"), R"({"train": {"epochs": -3}})");
  bad = invoke({"train", "--config", t.str("type.json"), "--data", t.str("d"), "--out", t.str("r")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("train.epochs"), std::string::npos) << bad.err;

  write(t.str("model.json"), R"({"model": {"channel_widths": [4, 0]}})");
  bad = invoke({"train", "--config", t.str("model.json"), "--data", t.str("d"), "--out", t.str("r")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("model.channel_widths"), std::string::npos) << bad.err;
  EXPECT_FALSE(std::filesystem::exists(t.str("r")));
}

TEST(Cli, ThreadsFallBackToEnvironment) {
  TempDir t("thr");
  ::setenv("METADIFF_THREADS", "1", 1);
  CliResult r = invoke({"gen-data", "--n", "10", "--size", "8", "--out", t.str("d")});
  EXPECT_EQ(r.header()["threads"], 1);
  ::setenv("METADIFF_THREADS", "zero", 1);
  r = invoke({"gen-data", "--n", "10", "--size", "8", "--out", t.str("d")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("METADIFF_THREADS"), std::string::npos);
  r = invoke({"--threads", "2", "gen-data", "--n", "10", "--size", "8", "--out", t.str("d")});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.header()["threads"], 2);
  ::unsetenv("METADIFF_THREADS");
}

TEST_F(CliRun, TrainMissingDatasetExitsTwo) {
  const CliResult r = invoke({"train", "--data", p("nope"), "--out", p("r_missing")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("data"), std::string::npos);
}

TEST_F(CliRun, TrainWithZeroEpochsSavesTheInitialModel) {
  const CliResult r = invoke({"train", "--config", p("tiny.json"), "--data", p("d"), "--out", p("r0"),
                     "--epochs", "0", "--timesteps", "10", "--seed", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(p("r0/report.csv")), "epoch,train_loss,val_mae,seconds\n");
  const Checkpoint ck = load_checkpoint(p("r0/best.mdck"));
  DenoiserConfig expected = ck.model.config();
  EXPECT_EQ(expected.channel_widths, (std::vector<std::size_t>{4, 8}));
  EXPECT_EQ(expected.quadrant_side, 4u);
  EXPECT_EQ(ck.model.checksum(), DenoiserModel::init(expected, derive_seed(5, kInitStream)).checksum());
  EXPECT_EQ(read_file(p("r0/best.mdck")), read_file(p("r0/last.mdck")));
}

TEST_F(CliRun, TrainWritesReportCheckpointAndEpochLines) {
  const std::string csv = slurp(p("run/report.csv"));
  EXPECT_EQ(csv.rfind("epoch,train_loss,val_mae,seconds\n1,", 0), 0u) << csv;
  EXPECT_TRUE(std::filesystem::exists(p("run/best.mdck")));
  EXPECT_TRUE(std::filesystem::exists(p("run/config.json")));
  const Checkpoint ck = load_checkpoint(p("run/best.mdck"));
  EXPECT_EQ(ck.schedule.timesteps, 10u);
  EXPECT_EQ(ck.proxy_seed, 7u);
}

TEST_F(CliRun, SampleThenEvalFromSampleReproducesSidecarMae) {
  const CliResult s = invoke({"sample", "--checkpoint", p("run/best.mdck"), "--condition", p("cond.json"),
                     "--count", "5", "--guidance", "1.5", "--seed", "2", "--out", p("s")});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_EQ(s.header()["command"], "sample");
  const json side = json::parse(slurp(p("s/samples.json")));
  EXPECT_EQ(side["request"]["count"], 5);
  EXPECT_EQ(side["request"]["guidance"], 1.5);
  ASSERT_EQ(side["samples"].size(), 5u);
  for (const auto& e : side["samples"]) {
    const StructureGrid g = read_pgm(p("s/" + e["file"].get<std::string>()));
    EXPECT_EQ(g.side(), 8u);
    EXPECT_TRUE(is_flip_symmetric(g));
  }

  const CliResult e = invoke({"eval", "--from-sample", p("s"), "--out", p("s_eval")});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto rescored = read_per_sample_csv(p("s_eval/per_sample.csv"));
  ASSERT_EQ(rescored.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(rescored[i], side["samples"][i]["mae"].get<double>()) << i;
  }
}

TEST_F(CliRun, SampleRejectsBadConditions) {
  write(p("short.json"), R"({"spectral": [0.1, 0.2], "w1": 2.6, "h2": 0.7, "n2": 4.0})");
  CliResult r = invoke({"sample", "--checkpoint", p("run/best.mdck"), "--condition", p("short.json"), "--out", p("x")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("condition.spectral"), std::string::npos) << r.err;
  json c = json::parse(slurp(p("cond.json")));
  c["n2"] = 9.0;
  write(p("range.json"), c.dump());
  r = invoke({"sample", "--checkpoint", p("run/best.mdck"), "--condition", p("range.json"), "--out", p("x")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("condition.n2"), std::string::npos) << r.err;
}

TEST_F(CliRun, EvalWritesReportForSplit) {
  const CliResult r = invoke({"eval", "--checkpoint", p("run/best.mdck"), "--data", p("d"), "--split", "val",
                     "--limit", "3", "--out", p("ev")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.header()["config"]["split"], "val");
  EXPECT_EQ(read_per_sample_csv(p("ev/per_sample.csv")).size(), 3u);
  const json summary = json::parse(slurp(p("ev/summary.json")));
  EXPECT_EQ(summary["count"], 3);
  EXPECT_TRUE(std::filesystem::exists(p("ev/histogram.dat")));

  EXPECT_EQ(invoke({"eval", "--checkpoint", p("run/best.mdck"), "--data", p("d"), "--split", "dev",
                 "--out", p("ev2")}).code, 2);
}

TEST_F(CliRun, EvalRejectsDatasetFromAnotherProxy) {
  ASSERT_EQ(invoke({"gen-data", "--n", "10", "--size", "8", "--proxy-seed", "8", "--out", p("d8")}).code, 0);
  const CliResult r = invoke({"eval", "--checkpoint", p("run/best.mdck"), "--data", p("d8"), "--out", p("ev8")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("proxy"), std::string::npos);
}

TEST_F(CliRun, InspectVerifiesContainers) {
  CliResult r = invoke({"inspect", p("d")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json info = json::parse(r.out.substr(r.out.find('\n') + 1));
  EXPECT_EQ(info["kind"], "dataset");
  EXPECT_EQ(info["splits"]["train"]["count"], 32);

  r = invoke({"inspect", p("run/best.mdck")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json ck = json::parse(r.out.substr(r.out.find('\n') + 1));
  EXPECT_EQ(ck["kind"], "checkpoint");
  EXPECT_EQ(ck["parameters"], load_checkpoint(p("run/best.mdck")).model.parameter_count());

  for (const char* src : {"run/best.mdck", "d/dataset.mdif"}) {
    auto bytes = read_file(p(src));
    bytes[bytes.size() / 2] ^= std::byte{0x10};
    write_file(p("tampered"), bytes);
    EXPECT_EQ(invoke({"inspect", p("tampered")}).code, 4) << src;
    EXPECT_EQ(exec(p("tampered")), 2);  // not a subcommand
    EXPECT_EQ(exec("inspect " + p("tampered")), 4) << src;
  }
  write(p("junk.bin"), "hello world");
  EXPECT_EQ(invoke({"inspect", p("junk.bin")}).code, 4);
}

TEST_F(CliRun, SampleAndEvalAreDeterministic) {
  for (const char* out : {"sa", "sb"}) {
    ASSERT_EQ(invoke({"sample", "--checkpoint", p("run/best.mdck"), "--condition", p("cond.json"),
                   "--count", "3", "--seed", "4", "--out", p(out)})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(p("sa/samples.json")), slurp(p("sb/samples.json")));
  for (int i = 0; i < 3; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "/sample_%04d.pgm", i);
    EXPECT_EQ(slurp(p("sa") + name), slurp(p("sb") + name));
  }
}

TEST_F(CliRun, LegacyVarianceFlagChangesTheChain) {
  const std::vector<std::string> base = {"sample", "--checkpoint", p("run/best.mdck"), "--condition",
                                         p("cond.json"), "--count", "4", "--seed", "6"};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
  };
  ASSERT_EQ(invoke(with({"--out", p("lv_std")})).code, 0);
  const CliResult r = invoke(with({"--legacy-variance", "--out", p("lv_leg")}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.header()["config"]["legacy_variance"], true);
  std::string std_grids, leg_grids;
  for (int i = 0; i < 4; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "/sample_%04d.pgm", i);
    std_grids += slurp(p("lv_std") + name);
    leg_grids += slurp(p("lv_leg") + name);
  }
  EXPECT_NE(std_grids, leg_grids);
}
