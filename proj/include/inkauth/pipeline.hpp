#pragma once

#include <filesystem>
#include <vector>

#include "inkauth/calibrate.hpp"
#include "inkauth/config.hpp"
#include "inkauth/contrastive.hpp"
#include "inkauth/corpus.hpp"
#include "inkauth/report.hpp"

namespace inkauth {

/// File layout of a run directory.
struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path config;          // effective config.ini
  std::filesystem::path manifest;        // corpus/manifest.jsonl
  std::filesystem::path preprocessed;    // preprocessed/<sample_id>.png
  std::filesystem::path checkpoint;      // pretrain/checkpoint.bin
  std::filesystem::path metrics;         // pretrain/metrics.csv
  std::filesystem::path classifier;      // calibrate/classifier.bin
  std::filesystem::path calibration_log; // calibrate/loss.csv
  std::filesystem::path eval_csv;        // evaluate/report.csv
  std::filesystem::path eval_json;       // evaluate/report.json
  std::filesystem::path sweep_json;      // sweep/reports.json
  std::filesystem::path sweep_table;     // sweep/summary.txt
  std::filesystem::path sweep_csv;       // sweep/conditions.csv
  std::filesystem::path report_dir;      // report/
};

RunPaths run_paths(const std::filesystem::path& root);

/// Writes the effective config into the run directory.
void record_config(const RunConfig& config);

CorpusManifest stage_generate_corpus(const RunConfig& config);

/// Denoises every corpus image (identity copy when the filter is disabled).
void stage_preprocess(const RunConfig& config);

/// Pre-processed images of one split, in manifest order. ManifestError lists
/// missing files.
std::vector<Image> load_preprocessed(const RunPaths& paths, const std::vector<const SampleRecord*>& records);

/// Resumes from an existing checkpoint when `resume` is set and one is present.
PretrainState stage_pretrain(const RunConfig& config, bool resume);

CalibrationResult stage_calibrate(const RunConfig& config);

EvalReport stage_evaluate(const RunConfig& config);

/// Robustness sweep for the configured arm, plus the no-prefilter arm when
/// evaluation.ablate_prefilter is set.
std::vector<SweepArm> stage_sweep(const RunConfig& config);

/// Summary table, conditions table, loss curve and weight heatmaps under report/.
/// ManifestError lists every absent input artifact.
void stage_report(const RunConfig& config);

}  // namespace inkauth
