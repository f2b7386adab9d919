#include "inkauth/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <json.hpp>
#include <numeric>
#include <set>

#include "inkauth/errors.hpp"
#include "inkauth/patches.hpp"
#include "inkauth/seeding.hpp"

namespace inkauth {

namespace {

struct ClassifierCache {
  nn::Encoder::Cache encoder;
  nn::Mat tokens;
  nn::Mat pooled;
};

nn::Mat classifier_logits(const ClassifierState& c, const nn::Mat& patches, const Eigen::VectorXd* scale,
                          ClassifierCache* cache) {
  ClassifierCache local;
  ClassifierCache& k = cache ? *cache : local;
  k.tokens = c.encoder.online.branch.encoder.forward(patches, scale, cache ? &k.encoder : nullptr);
  k.pooled = k.tokens.colwise().mean();
  return c.head.forward(k.pooled);
}

/// Backprop of dL/dlogits through head and encoder; returns dL/d(scaled input).
nn::Mat classifier_backward(const ClassifierState& c, const ClassifierCache& k, const nn::Mat& d_logits,
                            nn::Encoder& g_encoder, nn::Linear& g_head) {
  const nn::Mat d_pooled = c.head.backward(k.pooled, d_logits, g_head);
  const nn::Mat d_tokens = d_pooled.replicate(k.tokens.rows(), 1) / static_cast<double>(k.tokens.rows());
  return c.encoder.online.branch.encoder.backward(d_tokens, k.encoder, g_encoder);
}

Eigen::RowVectorXd softmax(const nn::Mat& logits) {
  Eigen::RowVectorXd e = (logits.row(0).array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

void validate(const CalibrationConfig& c) {
  if (c.shots_per_writer < 1 || c.epochs < 0 || c.batch_size < 1 || c.inference_rounds < 0)
    throw ConfigError("calibration shots and batch size must be positive; epochs and rounds nonnegative");
  if (!(c.optimizer.learning_rate >= 0.0)) throw RangeError("calibration learning rate must be nonnegative");
}

int ClassifierState::class_of(int writer_id) const {
  auto it = std::find(label_map.begin(), label_map.end(), writer_id);
  return it == label_map.end() ? -1 : static_cast<int>(it - label_map.begin());
}

ClassifierState make_classifier(const EncoderState& pretrained, const std::vector<int>& writer_ids, int patch_size,
                                std::uint64_t seed) {
  ClassifierState c;
  c.encoder = pretrained;
  c.label_map = writer_ids;
  std::sort(c.label_map.begin(), c.label_map.end());
  c.label_map.erase(std::unique(c.label_map.begin(), c.label_map.end()), c.label_map.end());
  if (c.label_map.empty()) throw ManifestError("calibration needs at least one writer");
  Rng rng(sub_seed(seed, "classifier-head"));
  c.head = nn::Linear::init(pretrained.config.embed_dim, c.num_classes(), rng);
  c.patch_size = patch_size;
  return c;
}

CalibrationResult calibrate(const EncoderState& pretrained, const std::vector<LabeledImage>& pool, int patch_size,
                            const CalibrationConfig& config, const MatchingConfig& matching) {
  validate(config);
  std::map<int, std::vector<std::size_t>> by_writer;
  for (std::size_t i = 0; i < pool.size(); ++i) by_writer[pool[i].writer_id].push_back(i);
  std::vector<int> writers;
  for (const auto& [w, idx] : by_writer) {
    if (static_cast<int>(idx.size()) < config.shots_per_writer)
      throw RangeError(fmt::format("writer {} has {} calibration samples, {} shots requested", w, idx.size(),
                                   config.shots_per_writer));
    writers.push_back(w);
  }

  CalibrationResult result;
  result.classifier = make_classifier(pretrained, writers, patch_size, config.seed);
  ClassifierState& c = result.classifier;

  std::vector<std::size_t> chosen;
  Rng shot_rng(sub_seed(config.seed, "shots"));
  for (auto& [w, idx] : by_writer) {
    std::shuffle(idx.begin(), idx.end(), shot_rng);
    for (int s = 0; s < config.shots_per_writer; ++s) {
      chosen.push_back(idx[s]);
      result.shots.push_back(pool[idx[s]].sample_id);
    }
  }

  std::vector<nn::Mat> inputs;
  std::vector<int> labels;
  for (std::size_t i : chosen) {
    inputs.push_back(patchify(*pool[i].image, patch_size).patches);
    labels.push_back(c.class_of(pool[i].writer_id));
  }

  nn::Encoder& enc = c.encoder.online.branch.encoder;
  nn::Encoder m_enc = nn::zeros_like(enc), v_enc = nn::zeros_like(enc);
  nn::Linear m_head = nn::Linear::zeros(c.head.weight.rows(), c.head.weight.cols()), v_head = m_head;
  auto concat = [](auto a, const auto& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  const auto params = concat(matrices(enc), matrices(c.head));
  const auto m = concat(matrices(m_enc), matrices(m_head));
  const auto v = concat(matrices(v_enc), matrices(v_head));
  std::int64_t t = 0;

  // Shots carry their own weight vectors, updated by matching rounds at the end of
  // the first `inference_rounds` epochs, so the head sees the input weighting it
  // meets at prediction time.
  MatchingConfig mc = matching;
  mc.max_rounds = config.inference_rounds;
  std::vector<MatchingState> weights(inputs.size(), init_matching(static_cast<int>(inputs.front().rows())));

  Rng order_rng(sub_seed(config.seed, "calibration-order"));
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      nn::Encoder g_enc = nn::zeros_like(enc);
      nn::Linear g_head = nn::Linear::zeros(c.head.weight.rows(), c.head.weight.cols());
      const double n = static_cast<double>(end - start);
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t i = order[j];
        ClassifierCache cache;
        const Eigen::VectorXd scale = weight_scale(weights[i].weights);
        const nn::Mat logits = classifier_logits(c, inputs[i], &scale, &cache);
        const Eigen::RowVectorXd p = softmax(logits);
        const int y = labels[i];
        epoch_loss -= std::log(std::max(p(y), 1e-300));
        nn::Mat d = p;
        d(0, y) -= 1.0;
        accumulate_saliency(weights[i], patch_saliency({classifier_backward(c, cache, d / n, g_enc, g_head)}));
      }
      ++t;
      adam_update(params, concat(matrices(std::as_const(g_enc)), matrices(std::as_const(g_head))), m, v, t,
                  config.optimizer);
    }
    for (auto& w : weights) matching_round_from_accumulated(w, mc);
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

Prediction predict(const ClassifierState& c, const Image& image, const MatchingConfig& matching, int rounds) {
  const PatchSequence seq = patchify(image, c.patch_size);
  if (seq.count() != c.encoder.config.token_len || seq.patch_dim() != c.encoder.config.patch_dim)
    throw ShapeError("image does not match the classifier's patch layout");
  MatchingConfig mc = matching;
  mc.max_rounds = rounds;
  MatchingState state = init_matching(seq.count());
  for (int r = 0; r < rounds; ++r) {
    const Eigen::VectorXd scale = weight_scale(state.weights);
    ClassifierCache cache;
    const nn::Mat logits = classifier_logits(c, seq.patches, &scale, &cache);
    const Eigen::RowVectorXd p = softmax(logits);
    const Eigen::RowVectorXd logp = p.array().max(1e-300).log();
    const double entropy = -(p.array() * logp.array()).sum();
    const nn::Mat d_logits = -(p.array() * (logp.array() + entropy)).matrix();
    nn::Encoder g_enc = nn::zeros_like(c.encoder.online.branch.encoder);
    nn::Linear g_head = nn::Linear::zeros(c.head.weight.rows(), c.head.weight.cols());
    const nn::Mat d_input = classifier_backward(c, cache, d_logits, g_enc, g_head);
    if (!matching_round(state, patch_saliency({d_input}), mc)) break;
  }
  const Eigen::VectorXd scale = weight_scale(state.weights);
  const nn::Mat logits = classifier_logits(c, seq.patches, &scale, nullptr);
  if (logits.cols() != c.num_classes()) throw ShapeError("head width differs from the label map");
  return {logits.row(0).transpose(), state.weights};
}

EvalReport score_report(const std::vector<Eigen::VectorXd>& scores, const std::vector<EvalSample>& samples,
                        const std::vector<int>& label_map, const EvalCondition& condition) {
  if (samples.empty()) throw RangeError("evaluation split is empty");
  if (scores.size() != samples.size()) throw ShapeError("one score vector per sample is required");
  const int k = static_cast<int>(label_map.size());
  EvalReport r;
  r.condition = condition;
  r.label_map = label_map;
  r.confusion.assign(k, std::vector<long>(k, 0));
  std::map<int, int> per_writer_total, per_writer_hits;
  int hits1 = 0, hits5 = 0, genuine_hits = 0, forged_hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = scores[i];
    if (s.size() != k) throw ShapeError(fmt::format("score vector has {} entries, label map {}", s.size(), k));
    auto it = std::find(label_map.begin(), label_map.end(), samples[i].claimed_writer);
    if (it == label_map.end())
      throw ShapeError(fmt::format("sample {} claims writer {} unknown to the classifier", samples[i].sample_id,
                                   samples[i].claimed_writer));
    const int truth = static_cast<int>(it - label_map.begin());
    int rank = 0;
    for (int j = 0; j < k; ++j)
      if (s(j) > s(truth) || (s(j) == s(truth) && j < truth)) ++rank;
    Eigen::Index predicted = 0;
    s.maxCoeff(&predicted);
    ++r.confusion[truth][predicted];
    const bool top1 = rank == 0;
    hits1 += top1;
    hits5 += rank < 5;
    ++per_writer_total[samples[i].claimed_writer];
    per_writer_hits[samples[i].claimed_writer] += top1;
    if (samples[i].forged) {
      ++r.forged_count;
      forged_hits += top1;
    } else {
      ++r.genuine_count;
      genuine_hits += top1;
    }
  }
  const double n = static_cast<double>(samples.size());
  r.top1 = hits1 / n;
  r.top5 = hits5 / n;
  r.genuine_top1 = r.genuine_count ? static_cast<double>(genuine_hits) / r.genuine_count : 0.0;
  r.forged_top1 = r.forged_count ? static_cast<double>(forged_hits) / r.forged_count : 0.0;
  for (const auto& [w, total] : per_writer_total)
    r.per_writer_accuracy[w] = static_cast<double>(per_writer_hits[w]) / total;
  return r;
}

EvalReport evaluate(const ClassifierState& classifier, const std::vector<EvalSample>& samples,
                    const EvalCondition& condition, const MatchingConfig& matching, int rounds) {
  if (samples.empty()) throw RangeError("evaluation split is empty");
  std::vector<Eigen::VectorXd> scores;
  scores.reserve(samples.size());
  for (const auto& s : samples) scores.push_back(predict(classifier, s.image, matching, rounds).scores);
  return score_report(scores, samples, classifier.label_map, condition);
}

std::string report_csv(const EvalReport& r) {
  std::string out = "writer,accuracy";
  for (int w : r.label_map) out += fmt::format(",pred_{}", w);
  out += '\n';
  for (std::size_t i = 0; i < r.label_map.size(); ++i) {
    const int w = r.label_map[i];
    auto it = r.per_writer_accuracy.find(w);
    out += fmt::format("{},{}", w, it == r.per_writer_accuracy.end() ? std::string() : fmt::format("{:.6f}", it->second));
    for (long v : r.confusion[i]) out += fmt::format(",{}", v);
    out += '\n';
  }
  out += fmt::format("top1,{:.6f}\ntop5,{:.6f}\ngenuine_top1,{:.6f}\nforged_top1,{:.6f}\n", r.top1, r.top5,
                     r.genuine_top1, r.forged_top1);
  return out;
}

namespace {

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json per_writer = nlohmann::json::object();
  for (const auto& [w, acc] : r.per_writer_accuracy) per_writer[std::to_string(w)] = acc;
  return {{"condition",
           {{"defect_ratio", r.condition.defect_ratio},
            {"forgery_ratio", r.condition.forgery_ratio},
            {"seed", r.condition.seed},
            {"prefilter", r.condition.prefilter}}},
          {"top1", r.top1},
          {"top5", r.top5},
          {"genuine_top1", r.genuine_top1},
          {"forged_top1", r.forged_top1},
          {"genuine_count", r.genuine_count},
          {"forged_count", r.forged_count},
          {"label_map", r.label_map},
          {"per_writer_accuracy", per_writer},
          {"confusion", r.confusion}};
}

}  // namespace

std::string report_json(const EvalReport& r) { return report_to_json(r).dump(2) + "\n"; }

std::vector<EvalSample> condition_samples(const CorpusManifest& manifest, const EvalCondition& condition,
                                          DefectKind kind, const FilterConfig& filter) {
  const CorpusManifest m = condition.forgery_ratio > 0.0
                               ? inject_forgeries(manifest, condition.forgery_ratio, sub_seed(condition.seed, "forgery"))
                               : manifest;
  std::vector<EvalSample> out;
  for (const SampleRecord* rec : m.split(Split::Test)) {
    Image img = render_record(m, *rec);
    if (condition.defect_ratio > 0.0)
      img = inject_defects(img, {kind, condition.defect_ratio,
                                 derive_seed(sub_seed(condition.seed, "defects"), hash_string(rec->sample_id))});
    if (condition.prefilter) img = denoise(img, filter);
    out.push_back({std::move(img), rec->writer_id, rec->forged, rec->sample_id});
  }
  return out;
}

std::vector<EvalReport> robustness_sweep(const ClassifierState& classifier, const CorpusManifest& manifest,
                                         const SweepSpec& spec, const MatchingConfig& matching, int rounds) {
  for (double r : spec.defect_ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw RangeError(fmt::format("defect ratio {} outside [0,1]", r));
  for (double r : spec.forgery_ratios)
    if (!(r >= 0.0 && r <= 0.5)) throw RangeError(fmt::format("forgery ratio {} outside [0,0.5]", r));
  if (spec.seeds.empty()) throw ConfigError("robustness sweep needs at least one seed");

  std::vector<EvalCondition> conditions{{0.0, 0.0, 0, spec.prefilter}};
  for (double r : spec.defect_ratios) conditions.push_back({r, 0.0, 0, spec.prefilter});
  for (double r : spec.forgery_ratios) conditions.push_back({0.0, r, 0, spec.prefilter});

  std::vector<EvalReport> reports;
  for (const auto& base : conditions)
    for (std::uint64_t seed : spec.seeds) {
      EvalCondition cond = base;
      cond.seed = seed;
      reports.push_back(evaluate(classifier, condition_samples(manifest, cond, spec.defect_kind, spec.filter), cond,
                                 matching, rounds));
    }
  return reports;
}

std::string condition_label(double defect_ratio, double forgery_ratio) {
  if (defect_ratio > 0.0 && forgery_ratio > 0.0)
    return fmt::format("+{:g}% defects +{:g}% forgeries", defect_ratio * 100.0, forgery_ratio * 100.0);
  if (defect_ratio > 0.0) return fmt::format("+{:g}% defects", defect_ratio * 100.0);
  if (forgery_ratio > 0.0) return fmt::format("+{:g}% forgeries", forgery_ratio * 100.0);
  return "baseline";
}

std::vector<SummaryRow> summarize(const std::vector<EvalReport>& reports) {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<const EvalReport*>> groups;
  for (const auto& r : reports) {
    const std::string label = condition_label(r.condition.defect_ratio, r.condition.forgery_ratio);
    auto it = std::find_if(rows.begin(), rows.end(), [&](const SummaryRow& s) { return s.label == label; });
    if (it == rows.end()) {
      rows.push_back({label, r.condition.defect_ratio, r.condition.forgery_ratio});
      groups.emplace_back();
      it = rows.end() - 1;
    }
    groups[static_cast<std::size_t>(it - rows.begin())].push_back(&r);
  }
  auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  };
  for (std::size_t g = 0; g < rows.size(); ++g) {
    std::vector<double> t1, t5;
    for (const EvalReport* r : groups[g]) {
      t1.push_back(r->top1);
      t5.push_back(r->top5);
    }
    rows[g].runs = static_cast<int>(t1.size());
    stats(t1, rows[g].top1_mean, rows[g].top1_std);
    stats(t5, rows[g].top5_mean, rows[g].top5_std);
  }
  return rows;
}

std::string mean_std(double mean, double stddev) { return fmt::format("{:.3f}±{:.3f}", mean, stddev); }

void save_classifier(const ClassifierState& c, const std::filesystem::path& path) {
  Checkpoint ck;
  store_encoder(c.encoder, ck);
  ck.arrays["head.weight"] = c.head.weight;
  ck.arrays["head.bias"] = c.head.bias;
  Eigen::MatrixXd labels(1, c.num_classes());
  for (int i = 0; i < c.num_classes(); ++i) labels(0, i) = c.label_map[i];
  ck.arrays["label_map"] = labels;
  ck.arrays["patch_size"] = Eigen::MatrixXd::Constant(1, 1, c.patch_size);
  save_checkpoint(ck, path);
}

ClassifierState load_classifier(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  ClassifierState c;
  c.encoder = load_encoder(ck);
  c.head = {ck.array("head.weight"), ck.array("head.bias")};
  const auto& labels = ck.array("label_map");
  for (Eigen::Index i = 0; i < labels.cols(); ++i) c.label_map.push_back(static_cast<int>(labels(0, i)));
  c.patch_size = static_cast<int>(ck.array("patch_size")(0, 0));
  if (c.head.weight.cols() != c.num_classes() || c.head.weight.rows() != c.encoder.config.embed_dim)
    throw ShapeError("classifier head does not match its label map");
  return c;
}

}  // namespace inkauth
