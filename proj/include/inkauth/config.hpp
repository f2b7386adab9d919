#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "inkauth/calibrate.hpp"
#include "inkauth/contrastive.hpp"
#include "inkauth/corpus.hpp"
#include "inkauth/encoder.hpp"
#include "inkauth/matching.hpp"
#include "inkauth/patches.hpp"
#include "inkauth/prefilter.hpp"

namespace inkauth {

struct EvaluationConfig {
  std::vector<double> defect_ratios{0.1, 0.3, 0.5};
  std::vector<double> forgery_ratios{0.1, 0.2, 0.3};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  DefectKind defect_kind = DefectKind::Stain;
  bool ablate_prefilter = true;  // sweep also runs with the prefilter disabled
  int heatmap_samples = 4;
};

/// Every tunable of a run. Stage seeds are never stored: they are derived from
/// `seed` by purpose name.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string run_dir = "runs/default";

  CorpusParams corpus;
  FilterConfig filter;
  bool filter_enabled = true;
  int patch_size = 16;
  AugmentPolicy augment;
  EncoderConfig encoder;
  MatchingConfig matching;
  ContrastConfig contrastive;
  int checkpoint_interval = 100;
  CalibrationConfig calibration;
  EvaluationConfig evaluation;
};

/// Defaults tuned for the 8-writer desk corpus.
RunConfig default_config();

/// INI text (`[section]` then `key = value`; `;` or `#` start a comment line).
/// Unknown sections or keys throw ConfigError naming `section.key`.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Applies one `section.key=value` override.
void apply_override(RunConfig& config, std::string_view assignment);

/// Canonical INI of every field; parse_config(to_ini(c)) reproduces c exactly.
std::string to_ini(const RunConfig& config);

/// Cross-field checks (divisibility, ranges) plus every module's own validation.
void validate(const RunConfig& config);

/// Module configs with derived fields (token length, patch dim, stage seeds) filled.
CorpusParams corpus_params(const RunConfig& config);
EncoderConfig encoder_config(const RunConfig& config);
PretrainSetup pretrain_setup(const RunConfig& config);
CalibrationConfig calibration_config(const RunConfig& config);

/// run_dir, placed under $INKAUTH_RUN_ROOT when that is set and run_dir is relative.
std::filesystem::path resolve_run_dir(const RunConfig& config);

}  // namespace inkauth
