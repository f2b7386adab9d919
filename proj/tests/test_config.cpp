#include <cstdlib>

#include "inkauth/config.hpp"
#include "inkauth/errors.hpp"
#include "inkauth/fileio.hpp"
#include "test_util.hpp"

namespace inkauth {
namespace {

using testing::TempDir;

TEST(Config, DefaultsRoundTripThroughIni) {
  const RunConfig c = default_config();
  EXPECT_EQ(to_ini(parse_config(to_ini(c))), to_ini(c));
  EXPECT_NO_THROW(validate(c));
}

TEST(Config, NonDefaultValuesRoundTrip) {
  RunConfig c = default_config();
  c.seed = 123456789012345ULL;
  c.matching.alpha = 0.1 + 0.2;  // needs all 17 digits
  c.filter.window = WindowProfile::Gaussian;
  c.filter.max_passes = 9;
  c.filter.convergence_tol = 1e-3;
  c.evaluation.defect_ratios = {0.25};
  c.evaluation.seeds = {7, 9};
  c.evaluation.defect_kind = DefectKind::CreaseShadow;
  c.contrastive.record_wall_time = true;
  c.run_dir = "runs/x y";
  const RunConfig back = parse_config(to_ini(c));
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.matching.alpha, c.matching.alpha);
  EXPECT_EQ(back.filter.window, WindowProfile::Gaussian);
  EXPECT_EQ(back.filter.max_passes, 9);
  EXPECT_EQ(back.filter.convergence_tol, 1e-3);
  EXPECT_EQ(back.evaluation.seeds, c.evaluation.seeds);
  EXPECT_EQ(back.evaluation.defect_kind, DefectKind::CreaseShadow);
  EXPECT_TRUE(back.contrastive.record_wall_time);
  EXPECT_EQ(back.run_dir, "runs/x y");
  EXPECT_EQ(to_ini(back), to_ini(c));
}

TEST(Config, PartialFileKeepsDefaults) {
  const RunConfig c = parse_config("; comment\n[contrastive]\nsteps = 7\n# another\n[corpus]\nnum_writers=3\n");
  EXPECT_EQ(c.contrastive.steps, 7);
  EXPECT_EQ(c.corpus.num_writers, 3);
  EXPECT_EQ(c.contrastive.temperature, default_config().contrastive.temperature);
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    parse_config("[contrastive]\nlearnig_rate = 0.1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("contrastive.learnig_rate"), std::string::npos);
  }
  EXPECT_THROW(parse_config("[nosuch]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[encoder]\ndepth = two\n"), ConfigError);
}

TEST(Config, Overrides) {
  RunConfig c = default_config();
  apply_override(c, "contrastive.steps=42");
  apply_override(c, "matching.alpha = 0.3");
  apply_override(c, "evaluation.seeds=1,2,3");
  EXPECT_EQ(c.contrastive.steps, 42);
  EXPECT_EQ(c.matching.alpha, 0.3);
  EXPECT_EQ(c.evaluation.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_THROW(apply_override(c, "steps=3"), ConfigError);
  EXPECT_THROW(apply_override(c, "contrastive.stepz=3"), ConfigError);
}

TEST(Config, CrossFieldValidation) {
  RunConfig c = default_config();
  c.patch_size = 24;
  EXPECT_THROW(validate(c), ConfigError);
  c = default_config();
  c.encoder.heads = 3;
  EXPECT_THROW(validate(c), ConfigError);
  c = default_config();
  c.corpus.samples_per_writer = 4;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(Config, DerivedModuleConfigs) {
  RunConfig c = default_config();
  c.seed = 3;
  c.patch_size = 32;
  const EncoderConfig e = encoder_config(c);
  EXPECT_EQ(e.token_len, 16);
  EXPECT_EQ(e.patch_dim, 1024);
  EXPECT_EQ(e.seed, sub_seed(3, "encoder"));
  EXPECT_EQ(corpus_params(c).seed, sub_seed(3, "corpus"));
  EXPECT_EQ(pretrain_setup(c).contrast.seed, sub_seed(3, "pretrain"));
  EXPECT_EQ(calibration_config(c).seed, sub_seed(3, "calibration"));
  EXPECT_NE(sub_seed(3, "encoder"), sub_seed(3, "pretrain"));
}

TEST(Config, LoadFromFile) {
  TempDir dir;
  atomic_write(dir.path() / "c.ini", "[run]\nseed = 11\n");
  EXPECT_EQ(load_config(dir.path() / "c.ini").seed, 11u);
  EXPECT_THROW(load_config(dir.path() / "missing.ini"), ConfigError);
}

TEST(Config, RunRootEnvironment) {
  RunConfig c = default_config();
  c.run_dir = "runs/a";
  ::unsetenv("INKAUTH_RUN_ROOT");
  EXPECT_EQ(resolve_run_dir(c), std::filesystem::path("runs/a"));
  ::setenv("INKAUTH_RUN_ROOT", "/tmp/root", 1);
  EXPECT_EQ(resolve_run_dir(c), std::filesystem::path("/tmp/root/runs/a"));
  c.run_dir = "/abs/dir";
  EXPECT_EQ(resolve_run_dir(c), std::filesystem::path("/abs/dir"));
  ::unsetenv("INKAUTH_RUN_ROOT");
}

}  // namespace
}  // namespace inkauth
