#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "inkauth/config.hpp"
#include "inkauth/errors.hpp"
#include "inkauth/pipeline.hpp"

namespace {

constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

}  // namespace

int main(int argc, char** argv) {
  using namespace inkauth;

  CLI::App app{"Few-shot handwriting writer identification: corpus, pre-filter, "
               "contrastive pre-training, calibration and robustness evaluation."};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string run_dir;
  std::vector<std::string> overrides;
  bool fresh = false;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"generate-corpus", "render the synthetic corpus and its manifest"},
      {"preprocess", "apply the pre-filter to every corpus image"},
      {"pretrain", "contrastive pre-training with adaptive patch matching"},
      {"calibrate", "few-shot fine-tuning of a linear writer head"},
      {"evaluate", "top-1/top-5 on the clean test split"},
      {"sweep", "robustness sweep over defect and forgery ratios"},
      {"report", "summary tables, loss curve and weight heatmaps"},
      {"print-config", "print the effective configuration"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option("-r,--run-dir", run_dir, "run directory (overrides run.run_dir)");
    sub->add_option("overrides", overrides, "section.key=value overrides");
    if (name == "pretrain") sub->add_flag("--fresh", fresh, "ignore an existing checkpoint");
  }

  if (argc > 1 && argv[1][0] != '-') {
    const std::string first = argv[1];
    if (std::none_of(commands.begin(), commands.end(), [&](const auto& c) { return c.first == first; })) {
      std::fprintf(stderr, "unknown subcommand '%s'\n", first.c_str());
      return kUsageError;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  RunConfig config;
  try {
    config = config_path.empty() ? default_config() : load_config(config_path);
    for (const auto& o : overrides) apply_override(config, o);
    if (!run_dir.empty()) config.run_dir = run_dir;
    validate(config);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsageError;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "print-config") {
      std::fputs(to_ini(config).c_str(), stdout);
    } else if (cmd == "generate-corpus") {
      const auto m = stage_generate_corpus(config);
      fmt::print("{} samples, {} writers -> {}\n", m.samples.size(), m.num_writers,
                 run_paths(resolve_run_dir(config)).manifest.string());
    } else if (cmd == "preprocess") {
      stage_preprocess(config);
      fmt::print("pre-processed images in {}\n", run_paths(resolve_run_dir(config)).preprocessed.string());
    } else if (cmd == "pretrain") {
      const auto state = stage_pretrain(config, !fresh);
      fmt::print("step {}  final logged loss {:.4f}\n", state.encoder.step,
                 state.metrics.empty() ? 0.0 : state.metrics.back().loss);
    } else if (cmd == "calibrate") {
      const auto r = stage_calibrate(config);
      fmt::print("calibrated on {} shots, final epoch loss {:.4f}\n", r.shots.size(),
                 r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back());
    } else if (cmd == "evaluate") {
      const auto r = stage_evaluate(config);
      fmt::print("top-1 {:.3f}  top-5 {:.3f}\n", r.top1, r.top5);
    } else if (cmd == "sweep") {
      const auto arms = stage_sweep(config);
      fmt::print("{}", summary_table(arms));
    } else if (cmd == "report") {
      stage_report(config);
      fmt::print("report written to {}\n", run_paths(resolve_run_dir(config)).report_dir.string());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsageError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
  return 0;
}
