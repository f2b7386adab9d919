#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "inkauth/checkpoint.hpp"
#include "inkauth/contrastive.hpp"
#include "inkauth/corpus.hpp"
#include "inkauth/encoder.hpp"
#include "inkauth/matching.hpp"
#include "inkauth/prefilter.hpp"

namespace inkauth {

struct CalibrationConfig {
  int shots_per_writer = 5;
  int epochs = 20;
  int batch_size = 8;
  OptimizerConfig optimizer{1e-3, 0.9, 0.999, 0.0, 1e-8};
  int inference_rounds = 5;
  std::uint64_t seed = 0;
};

void validate(const CalibrationConfig& config);

/// Fine-tuned encoder plus a linear writer head over the mean-pooled tokens.
struct ClassifierState {
  EncoderState encoder;          // only online.branch.encoder is used
  nn::Linear head;               // D x num_classes
  std::vector<int> label_map;    // class index -> writer id
  int patch_size = 16;

  int num_classes() const { return static_cast<int>(label_map.size()); }
  int class_of(int writer_id) const;  // -1 when the writer is unknown
};

struct LabeledImage {
  const Image* image = nullptr;
  int writer_id = 0;
  std::string sample_id;
};

struct CalibrationResult {
  ClassifierState classifier;
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
  std::vector<std::string> shots;  // sample ids used, in selection order
};

/// Untrained classifier on top of a pre-trained encoder (head weights seeded).
ClassifierState make_classifier(const EncoderState& pretrained, const std::vector<int>& writer_ids, int patch_size,
                                std::uint64_t seed);

/// Cross-entropy fine-tuning of encoder + head on exactly `shots_per_writer`
/// samples per writer drawn without replacement. Each shot keeps a weight vector
/// refined by `inference_rounds` matching rounds driven by the loss gradient.
/// RangeError names a writer with too few samples.
CalibrationResult calibrate(const EncoderState& pretrained, const std::vector<LabeledImage>& pool, int patch_size,
                            const CalibrationConfig& config, const MatchingConfig& matching);

struct Prediction {
  Eigen::VectorXd scores;  // logits, one per class
  WeightVector weights;
};

/// Scores under `rounds` inference-time matching rounds driven by the gradient of
/// the predictive entropy w.r.t. the weighted patch input.
Prediction predict(const ClassifierState& classifier, const Image& image, const MatchingConfig& matching,
                   int rounds);

struct EvalCondition {
  double defect_ratio = 0.0;
  double forgery_ratio = 0.0;
  std::uint64_t seed = 0;
  bool prefilter = true;
};

struct EvalSample {
  Image image;          // already pre-processed as the condition requires
  int claimed_writer = 0;
  bool forged = false;
  std::string sample_id;
};

struct EvalReport {
  EvalCondition condition;
  double top1 = 0.0;
  double top5 = 0.0;
  double genuine_top1 = 0.0;
  double forged_top1 = 0.0;
  int genuine_count = 0;
  int forged_count = 0;
  std::vector<int> label_map;
  std::map<int, double> per_writer_accuracy;
  std::vector<std::vector<long>> confusion;  // [claimed class][predicted class]
};

/// Top-k bookkeeping over precomputed scores; forged samples keep their claimed label.
EvalReport score_report(const std::vector<Eigen::VectorXd>& scores, const std::vector<EvalSample>& samples,
                        const std::vector<int>& label_map, const EvalCondition& condition);

EvalReport evaluate(const ClassifierState& classifier, const std::vector<EvalSample>& samples,
                    const EvalCondition& condition, const MatchingConfig& matching, int rounds);

std::string report_csv(const EvalReport& report);
std::string report_json(const EvalReport& report);

struct SweepSpec {
  std::vector<double> defect_ratios;
  std::vector<double> forgery_ratios;
  std::vector<std::uint64_t> seeds{0};
  DefectKind defect_kind = DefectKind::Stain;
  bool prefilter = true;
  FilterConfig filter;
};

/// Test-split samples of `manifest` under one condition: defects injected at
/// `defect_ratio`, forgeries at `forgery_ratio`, denoised when `prefilter`.
std::vector<EvalSample> condition_samples(const CorpusManifest& manifest, const EvalCondition& condition,
                                          DefectKind kind, const FilterConfig& filter);

/// Baseline plus one report per defect ratio and per forgery ratio, for every seed.
std::vector<EvalReport> robustness_sweep(const ClassifierState& classifier, const CorpusManifest& manifest,
                                         const SweepSpec& spec, const MatchingConfig& matching, int rounds);

struct SummaryRow {
  std::string label;
  double defect_ratio = 0.0;
  double forgery_ratio = 0.0;
  int runs = 0;
  double top1_mean = 0.0, top1_std = 0.0;
  double top5_mean = 0.0, top5_std = 0.0;
};

std::string condition_label(double defect_ratio, double forgery_ratio);

/// Mean and sample standard deviation per condition, in first-seen order.
std::vector<SummaryRow> summarize(const std::vector<EvalReport>& reports);

std::string mean_std(double mean, double stddev);

void save_classifier(const ClassifierState& classifier, const std::filesystem::path& path);
ClassifierState load_classifier(const std::filesystem::path& path);

}  // namespace inkauth
