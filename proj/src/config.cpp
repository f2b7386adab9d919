#include "inkauth/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdlib>
#include <fmt/format.h>
#include <functional>
#include <sstream>

#include "inkauth/errors.hpp"
#include "inkauth/fileio.hpp"
#include "inkauth/seeding.hpp"

namespace inkauth {

namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& text) {
  T value{};
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError(fmt::format("'{}' is not a valid number", text));
  return value;
}

std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }
std::string format_value(double v) { return fmt::format("{}", v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::string& v) { return v; }
std::string format_value(WindowProfile v) { return std::string(to_string(v)); }
std::string format_value(DefectKind v) { return std::string(to_string(v)); }

template <typename T>
std::string format_value(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_value(v[i]);
  return out;
}

void parse_value(const std::string& s, int& out) { out = parse_number<int>(s); }
void parse_value(const std::string& s, std::uint64_t& out) { out = parse_number<std::uint64_t>(s); }
void parse_value(const std::string& s, double& out) { out = parse_number<double>(s); }
void parse_value(const std::string& s, std::string& out) { out = trim(s); }
void parse_value(const std::string& s, WindowProfile& out) { out = window_profile_from_string(trim(s)); }
void parse_value(const std::string& s, DefectKind& out) { out = defect_kind_from_string(trim(s)); }
void parse_value(const std::string& s, bool& out) {
  const std::string t = trim(s);
  if (t == "true" || t == "1")
    out = true;
  else if (t == "false" || t == "0")
    out = false;
  else
    throw ConfigError(fmt::format("'{}' is not a boolean", s));
}

template <typename T>
void parse_value(const std::string& s, std::vector<T>& out) {
  out.clear();
  const std::string t = trim(s);
  if (t.empty()) return;
  std::stringstream in(t);
  std::string item;
  while (std::getline(in, item, ',')) {
    T v{};
    parse_value(item, v);
    out.push_back(v);
  }
}

template <typename T>
Field field(std::string section, std::string key, T& ref) {
  return {std::move(section), std::move(key), [&ref] { return format_value(ref); },
          [&ref](const std::string& s) { parse_value(s, ref); }};
}

/// The schema: every configurable field, in serialization order.
std::vector<Field> schema(RunConfig& c) {
  return {
      field("run", "seed", c.seed),
      field("run", "run_dir", c.run_dir),

      field("corpus", "num_writers", c.corpus.num_writers),
      field("corpus", "samples_per_writer", c.corpus.samples_per_writer),
      field("corpus", "height", c.corpus.height),
      field("corpus", "width", c.corpus.width),
      field("corpus", "calibrate_per_writer", c.corpus.calibrate_per_writer),
      field("corpus", "test_per_writer", c.corpus.test_per_writer),
      field("corpus", "defect_fraction", c.corpus.defect_fraction),
      field("corpus", "defect_area", c.corpus.defect_area),

      field("filter", "enabled", c.filter_enabled),
      field("filter", "block_size", c.filter.block_size),
      field("filter", "lambda_reg", c.filter.lambda_reg),
      field("filter", "window", c.filter.window),
      field("filter", "detail_threshold", c.filter.detail_threshold),
      field("filter", "passes", c.filter.passes),
      field("filter", "max_passes", c.filter.max_passes),
      field("filter", "convergence_tol", c.filter.convergence_tol),

      field("patches", "patch_size", c.patch_size),
      field("patches", "blur_probability", c.augment.gaussian_blur.probability),
      field("patches", "blur_sigma_min", c.augment.gaussian_blur.sigma_min),
      field("patches", "blur_sigma_max", c.augment.gaussian_blur.sigma_max),
      field("patches", "mixup_probability", c.augment.mixup.probability),
      field("patches", "mixup_alpha", c.augment.mixup.alpha),
      field("patches", "flip_probability", c.augment.horizontal_flip.probability),

      field("encoder", "embed_dim", c.encoder.embed_dim),
      field("encoder", "depth", c.encoder.depth),
      field("encoder", "heads", c.encoder.heads),
      field("encoder", "mlp_ratio", c.encoder.mlp_ratio),
      field("encoder", "projection_layers", c.encoder.projection_layers),
      field("encoder", "prediction_layers", c.encoder.prediction_layers),

      field("matching", "steps", c.matching.steps),
      field("matching", "boost_count", c.matching.boost_count),
      field("matching", "alpha", c.matching.alpha),
      field("matching", "interval", c.matching.interval),
      field("matching", "floor", c.matching.floor),
      field("matching", "max_rounds", c.matching.max_rounds),
      field("matching", "change_divisor", c.matching.change_divisor),

      field("contrastive", "temperature", c.contrastive.temperature),
      field("contrastive", "momentum", c.contrastive.momentum),
      field("contrastive", "batch_size", c.contrastive.batch_size),
      field("contrastive", "steps", c.contrastive.steps),
      field("contrastive", "learning_rate", c.contrastive.optimizer.learning_rate),
      field("contrastive", "beta1", c.contrastive.optimizer.beta1),
      field("contrastive", "beta2", c.contrastive.optimizer.beta2),
      field("contrastive", "weight_decay", c.contrastive.optimizer.weight_decay),
      field("contrastive", "epsilon", c.contrastive.optimizer.epsilon),
      field("contrastive", "queue_size", c.contrastive.queue_size),
      field("contrastive", "log_interval", c.contrastive.log_interval),
      field("contrastive", "record_wall_time", c.contrastive.record_wall_time),
      field("contrastive", "checkpoint_interval", c.checkpoint_interval),

      field("calibration", "shots_per_writer", c.calibration.shots_per_writer),
      field("calibration", "epochs", c.calibration.epochs),
      field("calibration", "batch_size", c.calibration.batch_size),
      field("calibration", "learning_rate", c.calibration.optimizer.learning_rate),
      field("calibration", "beta1", c.calibration.optimizer.beta1),
      field("calibration", "beta2", c.calibration.optimizer.beta2),
      field("calibration", "weight_decay", c.calibration.optimizer.weight_decay),
      field("calibration", "inference_rounds", c.calibration.inference_rounds),

      field("evaluation", "defect_ratios", c.evaluation.defect_ratios),
      field("evaluation", "forgery_ratios", c.evaluation.forgery_ratios),
      field("evaluation", "seeds", c.evaluation.seeds),
      field("evaluation", "defect_kind", c.evaluation.defect_kind),
      field("evaluation", "ablate_prefilter", c.evaluation.ablate_prefilter),
      field("evaluation", "heatmap_samples", c.evaluation.heatmap_samples),
  };
}

void set_field(RunConfig& c, const std::string& section, const std::string& key, const std::string& value) {
  for (auto& f : schema(c))
    if (f.section == section && f.key == key) {
      try {
        f.set(value);
      } catch (const std::exception& e) {
        throw ConfigError(fmt::format("config key '{}.{}': {}", section, key, e.what()));
      }
      return;
    }
  throw ConfigError(fmt::format("unknown config key '{}.{}'", section, key));
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

RunConfig parse_config(std::string_view text) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("config parse error: {}", e.message()));
  }
  RunConfig c = default_config();
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(fmt::format("unknown config key '{}' outside any section", section));
    for (const auto& [key, value] : body) set_field(c, section, key, value.data());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError(fmt::format("config file {} does not exist", path.string()));
  return parse_config(read_text(path));
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq)
    throw ConfigError(fmt::format("override '{}' is not of the form section.key=value", assignment));
  set_field(config, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
            std::string(assignment.substr(eq + 1)));
}

std::string to_ini(const RunConfig& config) {
  RunConfig copy = config;
  std::string out;
  std::string current;
  for (const auto& f : schema(copy)) {
    if (f.section != current) {
      out += fmt::format("{}[{}]\n", current.empty() ? "" : "\n", f.section);
      current = f.section;
    }
    out += fmt::format("{} = {}\n", f.key, f.get());
  }
  return out;
}

CorpusParams corpus_params(const RunConfig& c) {
  CorpusParams p = c.corpus;
  p.seed = sub_seed(c.seed, "corpus");
  p.patch_size = c.patch_size;
  return p;
}

EncoderConfig encoder_config(const RunConfig& c) {
  EncoderConfig e = c.encoder;
  e.token_len = (c.corpus.height / c.patch_size) * (c.corpus.width / c.patch_size);
  e.patch_dim = c.patch_size * c.patch_size;
  e.seed = sub_seed(c.seed, "encoder");
  return e;
}

PretrainSetup pretrain_setup(const RunConfig& c) {
  PretrainSetup s;
  s.contrast = c.contrastive;
  s.contrast.seed = sub_seed(c.seed, "pretrain");
  s.matching = c.matching;
  s.augment = c.augment;
  s.patch_size = c.patch_size;
  return s;
}

CalibrationConfig calibration_config(const RunConfig& c) {
  CalibrationConfig cal = c.calibration;
  cal.seed = sub_seed(c.seed, "calibration");
  return cal;
}

void validate(const RunConfig& c) {
  if (c.patch_size <= 0 || c.corpus.height % c.patch_size != 0 || c.corpus.width % c.patch_size != 0)
    throw ConfigError(fmt::format("patches.patch_size {} must divide corpus height {} and width {}", c.patch_size,
                                  c.corpus.height, c.corpus.width));
  if (c.checkpoint_interval < 1) throw ConfigError("contrastive.checkpoint_interval must be positive");
  if (c.evaluation.heatmap_samples < 0) throw ConfigError("evaluation.heatmap_samples must be nonnegative");
  validate(c.filter, Image(c.corpus.height, c.corpus.width));
  validate(c.augment);
  validate(encoder_config(c));
  validate(c.matching);
  validate(c.contrastive);
  validate(c.calibration);
  (void)plan_corpus(corpus_params(c));
}

std::filesystem::path resolve_run_dir(const RunConfig& c) {
  std::filesystem::path dir(c.run_dir);
  if (const char* root = std::getenv("INKAUTH_RUN_ROOT"); root != nullptr && *root != '\0' && dir.is_relative())
    return std::filesystem::path(root) / dir;
  return dir;
}

}  // namespace inkauth
