#include <cstdlib>
#include <sys/wait.h>

#include "inkauth/fileio.hpp"
#include "test_util.hpp"

namespace inkauth {
namespace {

using testing::TempDir;

constexpr const char* kTinyConfig = R"([run]
seed = 4

[corpus]
num_writers = 3
samples_per_writer = 6
height = 32
width = 32
calibrate_per_writer = 2
test_per_writer = 2

[patches]
patch_size = 16

[encoder]
embed_dim = 16
depth = 1
heads = 2

[matching]
interval = 2
floor = 2

[contrastive]
steps = 4
batch_size = 4
log_interval = 2
checkpoint_interval = 2

[calibration]
shots_per_writer = 2
epochs = 2
batch_size = 2
inference_rounds = 1

[evaluation]
defect_ratios = 0.3
forgery_ratios = 0.2
seeds = 0
heatmap_samples = 1
)";

int run(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(INKAUTH_CLI_PATH) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override { atomic_write(dir_.path() / "tiny.ini", kTinyConfig); }

  int stage(const std::string& name, const std::string& run_dir, const std::string& extra = "") {
    return run(name + " -c '" + (dir_.path() / "tiny.ini").string() + "' -r '" + (dir_.path() / run_dir).string() +
                   "' " + extra,
               dir_.path() / "log.txt");
  }
  std::string log() const { return read_text(dir_.path() / "log.txt"); }

  TempDir dir_;
};

TEST_F(Cli, FullPipelineIsDeterministic) {
  for (const char* r : {"a", "b"})
    for (const char* s : {"generate-corpus", "preprocess", "pretrain", "calibrate", "evaluate", "sweep", "report"})
      ASSERT_EQ(stage(s, r), 0) << s << ": " << log();
  const auto a = dir_.path() / "a", b = dir_.path() / "b";
  for (const char* f : {"pretrain/metrics.csv", "calibrate/loss.csv", "evaluate/report.json", "sweep/conditions.csv",
                        "report/summary.txt"})
    EXPECT_EQ(read_text(a / f), read_text(b / f)) << f;
  EXPECT_TRUE(std::filesystem::exists(a / "report/loss_curve.svg"));
  EXPECT_TRUE(std::filesystem::exists(a / "pretrain/checkpoint.bin"));
  const std::string summary = read_text(a / "report/summary.txt");
  EXPECT_NE(summary.find("+30% defects"), std::string::npos);
  EXPECT_NE(summary.find("no-prefilter"), std::string::npos);
}

TEST_F(Cli, PrintConfigAppliesOverrides) {
  ASSERT_EQ(stage("print-config", "p", "contrastive.steps=9"), 0) << log();
  EXPECT_NE(log().find("steps = 9"), std::string::npos);
}

TEST_F(Cli, UnknownConfigKeyExitsTwo) {
  EXPECT_EQ(stage("print-config", "p", "contrastive.learnig_rate=0.1"), 2);
  EXPECT_NE(log().find("contrastive.learnig_rate"), std::string::npos);
}

TEST_F(Cli, UnknownSubcommandExitsTwo) {
  EXPECT_EQ(run("bogus", dir_.path() / "log.txt"), 2);
  EXPECT_NE(log().find("bogus"), std::string::npos);
}

TEST_F(Cli, MissingConfigFileExitsTwo) {
  EXPECT_EQ(run("print-config -c /nonexistent/x.ini", dir_.path() / "log.txt"), 2);
}

TEST_F(Cli, StageWithoutInputsNamesMissingArtifact) {
  EXPECT_EQ(stage("calibrate", "empty"), 1);
  EXPECT_NE(log().find("manifest"), std::string::npos) << log();
}

}  // namespace
}  // namespace inkauth
