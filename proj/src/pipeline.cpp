#include "inkauth/pipeline.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include "inkauth/errors.hpp"
#include "inkauth/fileio.hpp"
#include "inkauth/png_io.hpp"
#include "inkauth/prefilter.hpp"

namespace inkauth {

namespace fs = std::filesystem;

RunPaths run_paths(const fs::path& root) {
  RunPaths p;
  p.root = root;
  p.config = root / "config.ini";
  p.manifest = root / "corpus" / "manifest.jsonl";
  p.preprocessed = root / "preprocessed";
  p.checkpoint = root / "pretrain" / "checkpoint.bin";
  p.metrics = root / "pretrain" / "metrics.csv";
  p.classifier = root / "calibrate" / "classifier.bin";
  p.calibration_log = root / "calibrate" / "loss.csv";
  p.eval_csv = root / "evaluate" / "report.csv";
  p.eval_json = root / "evaluate" / "report.json";
  p.sweep_json = root / "sweep" / "reports.json";
  p.sweep_table = root / "sweep" / "summary.txt";
  p.sweep_csv = root / "sweep" / "conditions.csv";
  p.report_dir = root / "report";
  return p;
}

void record_config(const RunConfig& config) {
  validate(config);
  atomic_write(run_paths(resolve_run_dir(config)).config, to_ini(config));
}

namespace {

void require(const std::vector<fs::path>& files) {
  std::vector<std::string> missing;
  for (const auto& f : files)
    if (!fs::exists(f)) missing.push_back(f.string());
  if (missing.empty()) return;
  std::string list;
  for (const auto& m : missing) list += "\n  " + m;
  throw ManifestError(fmt::format("missing artifacts:{}", list));
}

fs::path preprocessed_path(const RunPaths& paths, const SampleRecord& r) {
  return paths.preprocessed / (r.sample_id + ".png");
}

}  // namespace

CorpusManifest stage_generate_corpus(const RunConfig& config) {
  record_config(config);
  return generate_corpus(corpus_params(config), run_paths(resolve_run_dir(config)).manifest.parent_path());
}

void stage_preprocess(const RunConfig& config) {
  record_config(config);
  const RunPaths paths = run_paths(resolve_run_dir(config));
  require({paths.manifest});
  const CorpusManifest manifest = load_manifest(paths.manifest);
  for (const auto& r : manifest.samples) {
    const Image img = read_png(paths.manifest.parent_path() / r.image_path);
    write_png16(preprocessed_path(paths, r), config.filter_enabled ? denoise(img, config.filter) : img);
  }
}

std::vector<Image> load_preprocessed(const RunPaths& paths, const std::vector<const SampleRecord*>& records) {
  std::vector<fs::path> files;
  for (const auto* r : records) files.push_back(preprocessed_path(paths, *r));
  require(files);
  std::vector<Image> images;
  images.reserve(files.size());
  for (const auto& f : files) images.push_back(read_png(f));
  return images;
}

PretrainState stage_pretrain(const RunConfig& config, bool resume) {
  record_config(config);
  const RunPaths paths = run_paths(resolve_run_dir(config));
  require({paths.manifest});
  const CorpusManifest manifest = load_manifest(paths.manifest);
  const std::vector<Image> images = load_preprocessed(paths, manifest.split(Split::Pretrain));
  if (images.empty()) throw ManifestError("manifest has no pre-training samples");

  const PretrainSetup setup = pretrain_setup(config);
  PretrainState state = resume && fs::exists(paths.checkpoint)
                            ? pretrain_state_from_checkpoint(load_checkpoint(paths.checkpoint))
                            : init_pretrain(encoder_config(config), static_cast<int>(images.size()));
  auto save = [&] {
    save_checkpoint(to_checkpoint(state), paths.checkpoint);
    atomic_write(paths.metrics, metrics_csv(state.metrics));
  };
  pretrain(images, state, setup, -1, [&](long long step, double) {
    if (step % config.checkpoint_interval == 0) save();
  });
  save();
  return state;
}

CalibrationResult stage_calibrate(const RunConfig& config) {
  record_config(config);
  const RunPaths paths = run_paths(resolve_run_dir(config));
  require({paths.manifest, paths.checkpoint});
  const CorpusManifest manifest = load_manifest(paths.manifest);
  const auto records = manifest.split(Split::Calibrate);
  const std::vector<Image> images = load_preprocessed(paths, records);
  std::vector<LabeledImage> pool;
  for (std::size_t i = 0; i < records.size(); ++i) pool.push_back({&images[i], records[i]->writer_id, records[i]->sample_id});

  const EncoderState encoder = load_encoder(load_checkpoint(paths.checkpoint));
  CalibrationResult result = calibrate(encoder, pool, config.patch_size, calibration_config(config), config.matching);
  save_classifier(result.classifier, paths.classifier);
  std::string log = "epoch,loss\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) log += fmt::format("{},{:.10f}\n", e + 1, result.epoch_loss[e]);
  atomic_write(paths.calibration_log, log);
  return result;
}

EvalReport stage_evaluate(const RunConfig& config) {
  record_config(config);
  const RunPaths paths = run_paths(resolve_run_dir(config));
  require({paths.manifest, paths.classifier});
  const CorpusManifest manifest = load_manifest(paths.manifest);
  const auto records = manifest.split(Split::Test);
  std::vector<Image> images = load_preprocessed(paths, records);
  std::vector<EvalSample> samples;
  for (std::size_t i = 0; i < records.size(); ++i)
    samples.push_back({std::move(images[i]), records[i]->writer_id, records[i]->forged, records[i]->sample_id});
  const ClassifierState classifier = load_classifier(paths.classifier);
  const EvalReport report = evaluate(classifier, samples, {0.0, 0.0, config.seed, config.filter_enabled},
                                     config.matching, config.calibration.inference_rounds);
  atomic_write(paths.eval_csv, report_csv(report));
  atomic_write(paths.eval_json, report_json(report));
  return report;
}

std::vector<SweepArm> stage_sweep(const RunConfig& config) {
  record_config(config);
  const RunPaths paths = run_paths(resolve_run_dir(config));
  require({paths.manifest, paths.classifier});
  const CorpusManifest manifest = load_manifest(paths.manifest);
  const ClassifierState classifier = load_classifier(paths.classifier);

  std::vector<bool> arms{config.filter_enabled};
  if (config.evaluation.ablate_prefilter && config.filter_enabled) arms.push_back(false);

  std::vector<SweepArm> out;
  nlohmann::json all = nlohmann::json::array();
  for (bool prefilter : arms) {
    SweepSpec spec;
    spec.defect_ratios = config.evaluation.defect_ratios;
    spec.forgery_ratios = config.evaluation.forgery_ratios;
    spec.seeds = config.evaluation.seeds;
    spec.defect_kind = config.evaluation.defect_kind;
    spec.prefilter = prefilter;
    spec.filter = config.filter;
    const auto reports =
        robustness_sweep(classifier, manifest, spec, config.matching, config.calibration.inference_rounds);
    const std::string name = prefilter ? "prefilter" : "no-prefilter";
    out.push_back({name, summarize(reports)});
    for (const auto& r : reports) {
      nlohmann::json j = nlohmann::json::parse(report_json(r));
      j["arm"] = name;
      all.push_back(std::move(j));
    }
  }
  atomic_write(paths.sweep_json, all.dump(2) + "\n");
  atomic_write(paths.sweep_table, summary_table(out));
  atomic_write(paths.sweep_csv, conditions_csv(out));
  return out;
}

void stage_report(const RunConfig& config) {
  const RunPaths paths = run_paths(resolve_run_dir(config));
  require({paths.metrics, paths.checkpoint, paths.sweep_json, paths.eval_json});

  const auto reports_json = nlohmann::json::parse(read_text(paths.sweep_json));
  std::vector<std::string> arm_order;
  std::map<std::string, std::vector<EvalReport>> by_arm;
  for (const auto& j : reports_json) {
    EvalReport r;
    r.condition.defect_ratio = j.at("condition").at("defect_ratio").get<double>();
    r.condition.forgery_ratio = j.at("condition").at("forgery_ratio").get<double>();
    r.top1 = j.at("top1").get<double>();
    r.top5 = j.at("top5").get<double>();
    const std::string arm = j.at("arm").get<std::string>();
    if (!by_arm.contains(arm)) arm_order.push_back(arm);
    by_arm[arm].push_back(r);
  }
  std::vector<SweepArm> arms;
  for (const auto& name : arm_order) arms.push_back({name, summarize(by_arm[name])});

  const auto eval = nlohmann::json::parse(read_text(paths.eval_json));
  std::string summary = fmt::format("test split: top-1 {:.3f}%  top-5 {:.3f}%\n\n", 100.0 * eval.at("top1").get<double>(),
                                    100.0 * eval.at("top5").get<double>());
  summary += summary_table(arms);
  atomic_write(paths.report_dir / "summary.txt", summary);
  atomic_write(paths.report_dir / "conditions.csv", conditions_csv(arms));
  atomic_write(paths.report_dir / "loss_curve.svg", loss_curve_svg(parse_metrics_csv(read_text(paths.metrics))));

  const PretrainState state = pretrain_state_from_checkpoint(load_checkpoint(paths.checkpoint));
  const int grid_rows = config.corpus.height / config.patch_size;
  const int grid_cols = config.corpus.width / config.patch_size;
  std::vector<std::string> ids;
  if (fs::exists(paths.manifest))
    for (const auto* r : load_manifest(paths.manifest).split(Split::Pretrain)) ids.push_back(r->sample_id);
  const int n = std::min<int>(config.evaluation.heatmap_samples, static_cast<int>(state.matching.size()));
  for (int i = 0; i < n; ++i) {
    const std::string name = i < static_cast<int>(ids.size()) ? ids[i] : fmt::format("image{:03d}", i);
    write_png8(paths.report_dir / "heatmaps" / (name + ".png"),
               weight_heatmap(state.matching[i].weights, grid_rows, grid_cols));
  }
}

}  // namespace inkauth
