// Acceptance criteria runner. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
#include <fmt/format.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "inkauth/calibrate.hpp"
#include "inkauth/config.hpp"
#include "inkauth/contrastive.hpp"
#include "inkauth/corpus.hpp"
#include "inkauth/encoder.hpp"
#include "inkauth/fileio.hpp"
#include "inkauth/matching.hpp"
#include "inkauth/patches.hpp"
#include "inkauth/pipeline.hpp"
#include "inkauth/prefilter.hpp"

namespace fs = std::filesystem;
using namespace inkauth;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

fs::path scratch_root() {
  static const fs::path root = fs::temp_directory_path() / fmt::format("inkauth_acceptance_{}", ::getpid());
  return root;
}

Eigen::MatrixXd unit_rows(int n, int d, Rng& rng) {
  Eigen::MatrixXd m = nn::random_normal(n, d, 1.0, rng);
  m.rowwise().normalize();
  return m;
}

// ---------------------------------------------------------------- InfoNCE
Outcome infonce_suite() {
  double worst_uniform = 0.0;
  for (int n : {2, 8, 64}) {
    Eigen::MatrixXd keys = Eigen::MatrixXd::Zero(n, 3);
    keys.col(0).setConstant(1.0);
    worst_uniform = std::max(worst_uniform, std::abs(info_nce(Eigen::Vector3d(1, 0, 0), keys, n / 2, 0.2) - std::log(n)));
  }
  Rng rng(2024);
  double worst_brute = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int n = 1 + static_cast<int>(rng() % 8);
    const int d = 2 + static_cast<int>(rng() % 15);
    const Eigen::VectorXd q = unit_rows(1, d, rng).row(0).transpose();
    const Eigen::MatrixXd k = unit_rows(n, d, rng);
    const int pos = static_cast<int>(rng() % n);
    const double tau = uniform(rng, 0.05, 1.0);
    double z = 0.0;
    for (int i = 0; i < n; ++i) z += std::exp(k.row(i).dot(q) / tau);
    const double brute = -std::log(std::exp(k.row(pos).dot(q) / tau) / z);
    worst_brute = std::max(worst_brute, std::abs(info_nce(q, k, pos, tau) - brute));
  }
  bool monotone = true;
  double prev = INFINITY;
  const Eigen::MatrixXd negatives = unit_rows(7, 4, rng);
  for (int i = 0; i < 100; ++i) {
    const double s = -1.0 + 2.0 * i / 99.0;
    Eigen::MatrixXd keys(8, 4);
    keys.row(0) << s, std::sqrt(1.0 - s * s), 0.0, 0.0;
    keys.bottomRows(7) = negatives;
    const double l = info_nce(Eigen::Vector4d(1, 0, 0, 0), keys, 0, 0.2);
    monotone = monotone && l < prev;
    prev = l;
  }
  return {worst_uniform <= 1e-9 && worst_brute <= 1e-10 && monotone,
          fmt::format("max |ln N error| {:.2e}, max brute-force error {:.2e}, monotone ramp {}", worst_uniform,
                      worst_brute, monotone)};
}

// ---------------------------------------------------------------- Gradient
Outcome gradient_suite() {
  EncoderConfig c;
  c.embed_dim = 8;
  c.depth = 2;
  c.heads = 2;
  c.token_len = 2;
  c.patch_dim = 4;
  c.projection_layers = 3;
  c.prediction_layers = 2;
  c.seed = 17;
  EncoderState s = init_state(c);
  Rng rng(5);
  nn::visit(s.online, "", [&](const std::string& name, nn::Mat& m) {
    if (name.find("beta") != std::string::npos || name.find("bias") != std::string::npos)
      m = nn::random_normal(static_cast<int>(m.rows()), static_cast<int>(m.cols()), 0.1, rng);
  });
  s.momentum = s.online.branch;
  const std::vector<nn::Mat> inputs = {nn::random_normal(2, 4, 1.0, rng), nn::random_normal(2, 4, 1.0, rng)};
  const std::vector<Eigen::VectorXd> scales = {Eigen::Vector2d(0.7, 1.3), Eigen::Vector2d(1.1, 0.9)};

  // Real contrastive loss over the two samples: keys from the momentum branch.
  auto loss_and_record = [&](ForwardRecord* rec) {
    Eigen::MatrixXd q(2, c.embed_dim), k(2, c.embed_dim);
    if (rec) rec->caches.resize(2);
    for (int i = 0; i < 2; ++i) {
      q.row(i) = nn::online_embedding(s.online, inputs[i], &scales[i], rec ? &rec->caches[i] : nullptr);
      k.row(i) = nn::momentum_embedding(s.momentum, inputs[1 - i], nullptr);
    }
    double total = 0.0;
    for (int i = 0; i < 2; ++i) {
      Eigen::VectorXd dq;
      total += info_nce(q.row(i).transpose(), k, i, 0.2, &dq);
      if (rec) rec->d_embeddings.push_back(dq.transpose() / 2.0);
    }
    return total / 2.0;
  };
  ForwardRecord rec;
  loss_and_record(&rec);
  const GradientSet g = gradients(rec, s);

  bool momentum_zero = true;
  nn::visit(g.momentum, "", [&](const std::string&, const nn::Mat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) momentum_zero = momentum_zero && std::signbit(m(i)) == false && m(i) == 0.0;
  });

  const auto params = nn::parameter_list(s.online, "");
  const auto grads = nn::parameter_list(std::as_const(g.online), "");
  const double eps = 1e-5;
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0, failures = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    nn::Mat& m = *params[p].second;
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      const double saved = m(k);
      m(k) = saved + eps;
      const double up = loss_and_record(nullptr);
      m(k) = saved - eps;
      const double down = loss_and_record(nullptr);
      m(k) = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = (*grads[p].second)(k);
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      if (rel > worst) {
        worst = rel;
        worst_name = params[p].first;
      }
      failures += rel > 1e-4;
      ++checked;
    }
  }
  return {failures == 0 && momentum_zero && checked == nn::parameter_count(s.online),
          fmt::format("{} online parameters checked, worst relative error {:.2e} ({}), momentum gradient exactly zero {}",
                      checked, worst, worst_name, momentum_zero)};
}

// ---------------------------------------------------------------- EMA
Outcome ema_suite() {
  EncoderConfig c;
  c.embed_dim = 8;
  c.depth = 1;
  c.heads = 2;
  c.token_len = 4;
  c.patch_dim = 4;
  EncoderState s = init_state(c);
  auto set = [&](double online, double momentum) {
    nn::visit(s.online, "", [&](const std::string&, nn::Mat& m) { m.setConstant(online); });
    nn::visit(s.momentum, "", [&](const std::string&, nn::Mat& m) { m.setConstant(momentum); });
  };
  auto max_dev = [&](double want) {
    double d = 0.0;
    nn::visit(s.momentum, "", [&](const std::string&, const nn::Mat& m) {
      d = std::max(d, (m.array() - want).abs().maxCoeff());
    });
    return d;
  };
  set(2.0, 0.0);
  ema_update(s, 0.5);
  const bool half = max_dev(1.0) == 0.0;
  set(2.0, 0.7);
  ema_update(s, 1.0);
  const bool one = max_dev(0.7) == 0.0;
  set(2.0, 0.7);
  ema_update(s, 0.0);
  const bool zero = max_dev(2.0) == 0.0;

  set(1.0, 0.0);
  double worst = 0.0;
  for (int k = 1; k <= 10; ++k) {
    ema_update(s, 0.9);
    worst = std::max(worst, max_dev(1.0 - std::pow(0.9, k)));
  }
  return {half && one && zero && worst <= 1e-9,
          fmt::format("m=0.5 {}, m=1 {}, m=0 {}, contraction error over 10 steps {:.2e}", half, one, zero, worst)};
}

// ---------------------------------------------------------------- Filter
Image page_for(int i, int size = 128) { return render_page(writer_style(i % 8, 77), size, size, 9000 + i); }

Outcome filter_suite() {
  const FilterConfig cfg;
  double worst_parseval = 0.0;
  for (int i = 0; i < 5; ++i) {
    const Image x = inject_defects(page_for(i), {DefectKind::Stain, 0.2, static_cast<std::uint64_t>(i)});
    const EnergyMap e = block_spectral_energy(x, cfg);
    const int n = cfg.block_size;
    for (int by = 0; by < e.rows; ++by)
      for (int bx = 0; bx < e.cols; ++bx) {
        double ss = 0.0;
        for (int y = 0; y < n; ++y)
          for (int xx = 0; xx < n; ++xx) ss += x.at(by * n + y, bx * n + xx) * x.at(by * n + y, bx * n + xx);
        if (ss > 0.0) worst_parseval = std::max(worst_parseval, std::abs(e.at(by, bx) - n * n * ss) / (n * n * ss));
      }
  }

  bool exact = true;
  for (int i = 0; i < 10 && exact; ++i) {
    const Image x = inject_defects(page_for(i), {DefectKind::Fold, 0.3, static_cast<std::uint64_t>(i)});
    const Decomposition d = decompose(x, cfg);
    for (std::size_t k = 0; k < x.size(); ++k) exact = exact && d.denoised.data()[k] + d.residual.data()[k] == x.data()[k];
  }

  double min_gain = INFINITY, mean_gain = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Image clean = page_for(i);
    const Image stained = inject_defects(clean, {DefectKind::Stain, 0.1, static_cast<std::uint64_t>(100 + i)});
    const double gain = psnr(denoise(stained, cfg), clean) - psnr(stained, clean);
    min_gain = std::min(min_gain, gain);
    mean_gain += gain / 20.0;
  }

  int mse_cases = 0, mse_violations = 0;
  for (auto kind : {DefectKind::Stain, DefectKind::Scratch, DefectKind::Fold, DefectKind::CreaseShadow})
    for (double ratio : {0.1, 0.3, 0.5})
      for (int i = 0; i < 5; ++i) {
        const Image clean = page_for(20 + i);
        const Image bad = inject_defects(clean, {kind, ratio, static_cast<std::uint64_t>(200 + i)});
        ++mse_cases;
        mse_violations += mean_squared_error(denoise(bad, cfg), clean) > mean_squared_error(bad, clean);
      }
  return {worst_parseval <= 1e-9 && exact && min_gain >= 3.0 && mse_violations == 0,
          fmt::format("Parseval rel error {:.2e}; exact decomposition {}; PSNR gain at 10% stain min {:.2f} dB mean "
                      "{:.2f} dB over 20 pages; MSE increased in {}/{} cases",
                      worst_parseval, exact, min_gain, mean_gain, mse_violations, mse_cases)};
}

// ---------------------------------------------------------------- Matching
Outcome matching_suite() {
  Rng rng(77);
  int simplex_failures = 0, floor_failures = 0;
  for (int t = 0; t < 10000; ++t) {
    const int m = 1 + static_cast<int>(rng() % 100);
    MatchingConfig c;
    c.steps = 1 + static_cast<int>(rng() % 5);
    c.boost_count = 1 + static_cast<int>(rng() % 20);
    c.alpha = uniform(rng, 0.0, 1.0);
    c.floor = 1 + static_cast<int>(rng() % 40);
    WeightVector w = init_weights(m);
    for (int i = 0; i < m; ++i) {
      w.w[i] = uniform(rng);
      w.active[i] = uniform(rng) < 0.85;
    }
    if (w.active_count() == 0) w.active[rng() % m] = true;
    renormalize(w);
    std::vector<double> sal(m), ch(m);
    for (int i = 0; i < m; ++i) {
      sal[i] = uniform(rng);
      ch[i] = uniform(rng) * (uniform(rng) < 0.3 ? 0.01 : 1.0);
    }
    const WeightVector b = (t % 2 == 0) ? boost_step(w, sal, c) : w;
    const WeightVector p = prune_step(b, ch, c);
    auto simplex_ok = [](const WeightVector& v) {
      double s = 0.0;
      for (int i = 0; i < v.size(); ++i) {
        if (v.w[i] < 0.0 || (!v.active[i] && v.w[i] != 0.0)) return false;
        s += v.w[i];
      }
      return std::abs(s - 1.0) <= 1e-12;
    };
    simplex_failures += !simplex_ok(b) || !simplex_ok(p);
    floor_failures += p.active_count() < std::min(c.floor, b.active_count());
  }

  // Planted signal: E = sum_i (M w_i x_i)^2, saliency = |dE/dz_i| with z_i = M w_i x_i,
  // observed through multiplicative noise each round.
  const MatchingConfig cfg;
  int recovered = 0;
  for (int img = 0; img < 20; ++img) {
    Rng r(1000 + img);
    const int m = 64;
    std::vector<int> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), r);
    std::vector<int> planted(idx.begin(), idx.begin() + 10);
    std::vector<double> x(m);
    for (int i = 0; i < m; ++i) x[i] = uniform(r, 0.1, 0.5);
    for (int i : planted) x[i] = uniform(r, 0.8, 1.2);
    MatchingState s = init_matching(m);
    std::lognormal_distribution<double> noise(0.0, 0.3);
    for (int round = 0; round < cfg.max_rounds; ++round) {
      std::vector<double> sal(m);
      for (int i = 0; i < m; ++i) sal[i] = 2.0 * std::abs(m * s.weights.w[i] * x[i]) * x[i] * noise(r);
      matching_round(s, sal, cfg);
    }
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s.weights.w[a] > s.weights.w[b]; });
    const std::vector<int> top(order.begin(), order.begin() + 15);
    recovered += std::all_of(planted.begin(), planted.end(),
                             [&](int i) { return std::find(top.begin(), top.end(), i) != top.end(); });
  }
  return {simplex_failures == 0 && floor_failures == 0 && recovered >= 18,
          fmt::format("simplex violations {}/10000, floor violations {}, planted signal recovered in {}/20 images",
                      simplex_failures, floor_failures, recovered)};
}

// ---------------------------------------------------------------- Patch
Outcome patch_suite() {
  Rng rng(31);
  int failures = 0, count_failures = 0;
  for (int t = 0; t < 100; ++t) {
    const int p = 1 + static_cast<int>(rng() % 16);
    const int h = p * (1 + static_cast<int>(rng() % 8));
    const int w = p * (1 + static_cast<int>(rng() % 8));
    const int c = 1 + static_cast<int>(rng() % 3);
    Image img(h, w, c);
    for (double& v : img.data()) v = uniform(rng);
    const PatchSequence s = patchify(img, p);
    failures += !(unpatchify(s) == img);
    count_failures += s.count() != h * w / (p * p) || s.patches.rows() != h * w / (p * p);
  }
  return {failures == 0 && count_failures == 0,
          fmt::format("100 random shapes: {} round-trip mismatches, {} patch-count mismatches", failures, count_failures)};
}

// ---------------------------------------------------------------- Desk experiment
struct SeedRun {
  double top1 = 0.0, top5 = 0.0;
  double drop_prefilter = 0.0, drop_raw = 0.0;
};

std::vector<SeedRun> g_runs;
constexpr std::uint64_t kSeeds[] = {0, 1, 2, 3, 4};

RunConfig desk_config(std::uint64_t seed, const std::string& dir) {
  RunConfig c = default_config();
  c.seed = seed;
  c.run_dir = (scratch_root() / dir).string();
  return c;
}

Outcome end_to_end() {
  g_runs.clear();
  std::string per_seed;
  for (std::uint64_t seed : kSeeds) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig c = desk_config(seed, fmt::format("desk_{}", seed));
    stage_generate_corpus(c);
    stage_preprocess(c);
    stage_pretrain(c, false);
    stage_calibrate(c);
    const EvalReport r = stage_evaluate(c);

    // Robustness arms reuse the calibrated classifier of this seed.
    const CorpusManifest manifest = load_manifest(run_paths(resolve_run_dir(c)).manifest);
    const ClassifierState classifier = load_classifier(run_paths(resolve_run_dir(c)).classifier);
    auto arm = [&](bool prefilter) {
      SweepSpec spec;
      spec.defect_ratios = {0.3};
      spec.seeds = {seed};
      spec.defect_kind = DefectKind::Stain;
      spec.prefilter = prefilter;
      spec.filter = c.filter;
      const auto reports = robustness_sweep(classifier, manifest, spec, c.matching, c.calibration.inference_rounds);
      return reports[0].top1 - reports[1].top1;
    };
    SeedRun run{r.top1, r.top5, arm(true), arm(false)};
    g_runs.push_back(run);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    per_seed += fmt::format(" seed {}: top-1 {:.3f} top-5 {:.3f} ({:.0f} s);", seed, r.top1, r.top5, secs);
    std::fflush(stdout);
  }
  double t1 = 0.0, t5 = 0.0;
  for (const auto& r : g_runs) {
    t1 += r.top1 / g_runs.size();
    t5 += r.top5 / g_runs.size();
  }
  return {t1 >= 0.60 && t5 >= 0.90,
          fmt::format("mean top-1 {:.3f} (chance 0.125), mean top-5 {:.3f} over 5 seeds;{}", t1, t5, per_seed)};
}

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(ss / (v.size() - 1)) : 0.0};
}

Outcome robustness() {
  if (g_runs.size() != std::size(kSeeds)) return {false, "end-to-end runs unavailable"};
  std::vector<double> with, without;
  for (const auto& r : g_runs) {
    with.push_back(100.0 * r.drop_prefilter);
    without.push_back(100.0 * r.drop_raw);
  }
  const auto [mw, sw] = mean_sd(with);
  const auto [mr, sr] = mean_sd(without);
  return {mw <= 10.0 && mw < mr,
          fmt::format("top-1 drop at +30% stain: prefilter {:.1f} ± {:.1f} points, no prefilter {:.1f} ± {:.1f} points",
                      mw, sw, mr, sr)};
}

// ---------------------------------------------------------------- Reproducibility
Outcome reproducibility() {
  RunConfig a = desk_config(11, "repro_a");
  RunConfig b = desk_config(11, "repro_b");
  for (RunConfig* c : {&a, &b}) {
    c->contrastive.steps = 50;
    stage_generate_corpus(*c);
    stage_preprocess(*c);
    stage_pretrain(*c, false);
  }
  const std::string log_a = read_text(run_paths(resolve_run_dir(a)).metrics);
  const std::string log_b = read_text(run_paths(resolve_run_dir(b)).metrics);
  const std::string ck_a = read_text(run_paths(resolve_run_dir(a)).checkpoint);
  const std::string ck_b = read_text(run_paths(resolve_run_dir(b)).checkpoint);
  const bool logs_equal = log_a == log_b && !log_a.empty();
  const bool checkpoints_equal = ck_a == ck_b;

  // Interrupt at step 25, round-trip through a checkpoint file, finish to 50.
  const RunPaths paths = run_paths(resolve_run_dir(a));
  const CorpusManifest manifest = load_manifest(paths.manifest);
  const std::vector<Image> images = load_preprocessed(paths, manifest.split(Split::Pretrain));
  const PretrainSetup setup = pretrain_setup(a);
  PretrainState first = init_pretrain(encoder_config(a), static_cast<int>(images.size()));
  pretrain(images, first, setup, 25);
  const fs::path mid = scratch_root() / "repro_mid.bin";
  save_checkpoint(to_checkpoint(first), mid);
  PretrainState resumed = pretrain_state_from_checkpoint(load_checkpoint(mid));
  pretrain(images, resumed, setup);
  const fs::path end = scratch_root() / "repro_end.bin";
  save_checkpoint(to_checkpoint(resumed), end);
  const bool resume_log = metrics_csv(resumed.metrics) == log_a;
  const bool resume_state = read_text(end) == ck_a;
  return {logs_equal && checkpoints_equal && resume_log && resume_state,
          fmt::format("identical metrics logs {}, identical checkpoints {}, resumed log identical {}, resumed state "
                      "identical {} (50 steps, resume at 25)",
                      logs_equal, checkpoints_equal, resume_log, resume_state)};
}

}  // namespace

int main() {
  fs::create_directories(scratch_root());
  const std::vector<Criterion> criteria = {
      {"InfoNCE oracle suite", 5.0, infonce_suite},
      {"Gradient suite", 60.0, gradient_suite},
      {"EMA suite", 1.0, ema_suite},
      {"Filter suite", 120.0, filter_suite},
      {"Matching suite", 180.0, matching_suite},
      {"Patch suite", 60.0, patch_suite},
      {"End-to-end desk experiment", 900.0, end_to_end},
      {"Robustness direction", 60.0, robustness},
      {"Reproducibility", 300.0, reproducibility},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs <= c.budget_s;
    const bool pass = o.pass && in_budget;
    failed += !pass;
    fmt::print("{} {}: {} [{:.1f} s, budget {:.0f} s{}]\n", pass ? "PASS" : "FAIL", c.name, o.detail, secs,
               c.budget_s, in_budget ? "" : ", over budget");
    std::fflush(stdout);
  }
  fs::remove_all(scratch_root());
  fmt::print("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
