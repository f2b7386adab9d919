#include "inkauth/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "inkauth/errors.hpp"
#include "inkauth/fileio.hpp"
#include "inkauth/png_io.hpp"
#include "inkauth/seeding.hpp"

namespace inkauth {
namespace {

using json = nlohmann::json;

struct Point {
  double x, y;
};

// A glyph is a handful of quadratic Bezier strokes in the unit box.
using Stroke = std::array<Point, 3>;
using Glyph = std::vector<Stroke>;

constexpr int kAtlasSize = 12;
constexpr int kGlyphHeight = 10;
constexpr int kGlyphWidth = 8;
constexpr int kGlyphGap = 2;
constexpr int kLinePitch = 16;
constexpr int kMargin = 4;
constexpr int kBezierSegments = 8;

double frac(double v) { return v - std::floor(v); }

std::vector<Glyph> glyph_atlas(std::uint64_t texture_seed) {
  Rng rng(texture_seed);
  std::vector<Glyph> atlas(kAtlasSize);
  for (Glyph& glyph : atlas) {
    const int strokes = 1 + static_cast<int>(rng() % 3);
    for (int s = 0; s < strokes; ++s) {
      Stroke stroke;
      for (Point& p : stroke) p = {uniform(rng), uniform(rng)};
      glyph.push_back(stroke);
    }
  }
  return atlas;
}

void draw_segment(Image& page, Point a, Point b, double radius) {
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - radius - 1)));
  const int x1 = std::min(page.width() - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + radius + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - radius - 1)));
  const int y1 = std::min(page.height() - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + radius + 1)));
  const double vx = b.x - a.x;
  const double vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5 - a.x;
      const double py = y + 0.5 - a.y;
      const double t = len2 > 0 ? std::clamp((px * vx + py * vy) / len2, 0.0, 1.0) : 0.0;
      const double dx = px - t * vx;
      const double dy = py - t * vy;
      if (dx * dx + dy * dy <= radius * radius) {
        for (int c = 0; c < page.channels(); ++c) page.at(y, x, c) = kInkLevel;
      }
    }
  }
}

// Pixel priority field for a defect; the mask is its top-K entries.
std::vector<double> defect_priority(int height, int width, const DefectSpec& spec, Rng& rng,
                                    std::vector<double>& tone_param) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<double> field(n, 0.0);
  tone_param.assign(n, 0.0);
  const double scale = std::sqrt(static_cast<double>(height) * width);

  auto line_distance = [](double x, double y, double cx, double cy, double angle) {
    return std::abs((x - cx) * std::sin(angle) - (y - cy) * std::cos(angle));
  };

  switch (spec.kind) {
    case DefectKind::Stain: {
      const int blobs = 1 + static_cast<int>(rng() % 3);
      for (int b = 0; b < blobs; ++b) {
        const double cy = uniform(rng, 0, height);
        const double cx = uniform(rng, 0, width);
        const double sigma = uniform(rng, 0.09, 0.23) * scale;
        for (int y = 0; y < height; ++y)
          for (int x = 0; x < width; ++x) {
            const double d2 = (y + 0.5 - cy) * (y + 0.5 - cy) + (x + 0.5 - cx) * (x + 0.5 - cx);
            field[static_cast<std::size_t>(y) * width + x] += std::exp(-d2 / (2 * sigma * sigma));
          }
      }
      tone_param = field;
      break;
    }
    case DefectKind::Fold:
    case DefectKind::CreaseShadow: {
      const double angle = uniform(rng, 0, std::numbers::pi);
      const double cx = uniform(rng, 0, width);
      const double cy = uniform(rng, 0, height);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double d = line_distance(x + 0.5, y + 0.5, cx, cy, angle);
          field[static_cast<std::size_t>(y) * width + x] = -d;
          tone_param[static_cast<std::size_t>(y) * width + x] = d;
        }
      break;
    }
    case DefectKind::Scratch: {
      const int lines = 2 + static_cast<int>(rng() % 3);
      std::fill(field.begin(), field.end(), -1e300);
      for (int l = 0; l < lines; ++l) {
        const double angle = uniform(rng, 0, std::numbers::pi);
        const double cx = uniform(rng, 0, width);
        const double cy = uniform(rng, 0, height);
        for (int y = 0; y < height; ++y)
          for (int x = 0; x < width; ++x) {
            auto& f = field[static_cast<std::size_t>(y) * width + x];
            f = std::max(f, -line_distance(x + 0.5, y + 0.5, cx, cy, angle));
          }
      }
      break;
    }
  }
  // Tie-breaking jitter far below any geometric difference.
  for (double& f : field) f += 1e-9 * uniform(rng);
  return field;
}

std::vector<std::size_t> top_k(const std::vector<double>& field, std::size_t k) {
  std::vector<std::size_t> order(field.size());
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](std::size_t a, std::size_t b) {
    return field[a] > field[b] || (field[a] == field[b] && a < b);
  };
  if (k < order.size()) {
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
    order.resize(k);
  }
  std::sort(order.begin(), order.end());
  return order;
}

std::string image_name(const SampleRecord& r) {
  return "images/" + r.sample_id + (r.forged ? "_forged" : "") + ".png";
}

json defect_to_json(const DefectSpec& d) {
  return json{{"kind", to_string(d.kind)}, {"area_ratio", d.area_ratio}, {"seed", d.seed}};
}

json record_to_json(const SampleRecord& r) {
  json j{{"type", "sample"},
         {"sample_id", r.sample_id},
         {"writer_id", r.writer_id},
         {"split", to_string(r.split)},
         {"forged", r.forged},
         {"image_path", r.image_path}};
  j["defect"] = r.defect ? defect_to_json(*r.defect) : json(nullptr);
  if (r.true_writer_id) j["true_writer_id"] = *r.true_writer_id;
  if (r.forged) j["forgery_seed"] = r.forgery_seed;
  return j;
}

SampleRecord record_from_json(const json& j) {
  SampleRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.writer_id = j.at("writer_id").get<int>();
  r.split = split_from_string(j.at("split").get<std::string>());
  r.forged = j.at("forged").get<bool>();
  r.image_path = j.at("image_path").get<std::string>();
  if (j.contains("defect") && !j["defect"].is_null()) {
    const auto& d = j["defect"];
    r.defect = DefectSpec{defect_kind_from_string(d.at("kind").get<std::string>()),
                          d.at("area_ratio").get<double>(), d.at("seed").get<std::uint64_t>()};
  }
  if (j.contains("true_writer_id")) r.true_writer_id = j["true_writer_id"].get<int>();
  if (j.contains("forgery_seed")) r.forgery_seed = j["forgery_seed"].get<std::uint64_t>();
  return r;
}

}  // namespace

WriterStyle writer_style(int writer_id, std::uint64_t corpus_seed) {
  // Seed-dependent offsets, id-dependent irrational steps.
  Rng rng(sub_seed(corpus_seed, "writer-style-offsets"));
  const double oa = uniform(rng), ob = uniform(rng), oc = uniform(rng);
  const double a = frac(oa + writer_id * 0.6180339887498949);
  const double b = frac(ob + writer_id * 0.7548776662466927);
  const double c = frac(oc + writer_id * 0.5698402909980532);
  WriterStyle s;
  s.writer_id = writer_id;
  s.stroke_thickness = 1.0 + 2.0 * a;
  s.slant = -0.45 + 0.9 * b;
  s.glyph_density = 0.45 + 0.55 * c;
  s.texture_seed = derive_seed(sub_seed(corpus_seed, "atlas"), writer_id);
  return s;
}

WriterStyle jitter_style(const WriterStyle& base, std::uint64_t seed) {
  Rng rng(seed);
  WriterStyle s = base;
  s.stroke_thickness *= uniform(rng, 0.9, 1.1);
  s.slant *= uniform(rng, 0.9, 1.1);
  s.glyph_density = std::min(1.0, s.glyph_density * uniform(rng, 0.9, 1.1));
  return s;
}

Image render_page(const WriterStyle& style, int height, int width, std::uint64_t layout_seed) {
  Image page(height, width, 1, 0.0);
  const auto atlas = glyph_atlas(style.texture_seed);
  Rng rng(layout_seed);
  const double shear = std::tan(style.slant);
  const double radius = 0.5 * style.stroke_thickness;

  for (int top = kMargin; top + kGlyphHeight <= height - kMargin; top += kLinePitch) {
    const double baseline = top + kGlyphHeight + uniform(rng, -0.5, 0.5);
    for (int left = kMargin; left + kGlyphWidth <= width - kMargin; left += kGlyphWidth + kGlyphGap) {
      if (uniform(rng) >= style.glyph_density) continue;
      const Glyph& glyph = atlas[rng() % atlas.size()];
      std::normal_distribution<double> wobble(0.0, 0.04);
      for (const Stroke& stroke : glyph) {
        Stroke q = stroke;
        for (Point& p : q) {
          p.x += wobble(rng);
          p.y += wobble(rng);
        }
        Point prev{};
        for (int i = 0; i <= kBezierSegments; ++i) {
          const double t = static_cast<double>(i) / kBezierSegments;
          const double u = 1.0 - t;
          const double gx = u * u * q[0].x + 2 * u * t * q[1].x + t * t * q[2].x;
          const double gy = u * u * q[0].y + 2 * u * t * q[1].y + t * t * q[2].y;
          double y = baseline - kGlyphHeight + gy * kGlyphHeight;
          double x = left + gx * kGlyphWidth + (baseline - y) * shear;
          const Point cur{x, y};
          if (i > 0) draw_segment(page, prev, cur, radius);
          prev = cur;
        }
      }
    }
  }
  return page;
}

std::string_view to_string(DefectKind kind) {
  switch (kind) {
    case DefectKind::Scratch: return "scratch";
    case DefectKind::Stain: return "stain";
    case DefectKind::Fold: return "fold";
    case DefectKind::CreaseShadow: return "crease-shadow";
  }
  return "?";
}

DefectKind defect_kind_from_string(std::string_view name) {
  if (name == "scratch") return DefectKind::Scratch;
  if (name == "stain") return DefectKind::Stain;
  if (name == "fold") return DefectKind::Fold;
  if (name == "crease-shadow") return DefectKind::CreaseShadow;
  throw ConfigError(fmt::format("unknown defect kind '{}'", name));
}

std::vector<bool> defect_mask(int height, int width, const DefectSpec& spec) {
  if (!(spec.area_ratio >= 0.0 && spec.area_ratio <= 1.0)) {
    throw RangeError(fmt::format("defect area_ratio {} outside [0,1]", spec.area_ratio));
  }
  const std::size_t n = static_cast<std::size_t>(height) * width;
  const auto k = static_cast<std::size_t>(std::llround(spec.area_ratio * static_cast<double>(n)));
  Rng rng(spec.seed);
  std::vector<double> tone;
  const auto field = defect_priority(height, width, spec, rng, tone);
  std::vector<bool> mask(n, false);
  for (std::size_t i : top_k(field, k)) mask[i] = true;
  return mask;
}

Image inject_defects(const Image& image, const DefectSpec& spec) {
  if (!(spec.area_ratio >= 0.0 && spec.area_ratio <= 1.0)) {
    throw RangeError(fmt::format("defect area_ratio {} outside [0,1]", spec.area_ratio));
  }
  const int h = image.height();
  const int w = image.width();
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const auto k = static_cast<std::size_t>(std::llround(spec.area_ratio * static_cast<double>(n)));
  Image out = image;
  if (k == 0) return out;

  Rng rng(spec.seed);
  std::vector<double> tone_param;
  const auto field = defect_priority(h, w, spec, rng, tone_param);
  const auto chosen = top_k(field, k);

  // Per-pixel darkening amount, strictly positive on the mask.
  std::vector<double> tone(n, 0.0);
  switch (spec.kind) {
    case DefectKind::Stain: {
      const double tint = uniform(rng, 0.25, 0.45);
      double lo = 1e300, hi = -1e300;
      for (std::size_t i : chosen) {
        lo = std::min(lo, tone_param[i]);
        hi = std::max(hi, tone_param[i]);
      }
      for (std::size_t i : chosen) {
        const double t = hi > lo ? (tone_param[i] - lo) / (hi - lo) : 1.0;
        tone[i] = tint * (0.15 + 0.85 * std::sqrt(t));
      }
      break;
    }
    case DefectKind::Fold:
    case DefectKind::CreaseShadow: {
      double width_px = 0.0;
      for (std::size_t i : chosen) width_px = std::max(width_px, tone_param[i]);
      for (std::size_t i : chosen) {
        const double d = tone_param[i];
        tone[i] = 0.05 + 0.35 * std::exp(-d / (0.5 * width_px + 1.0));
        if (spec.kind == DefectKind::Fold && d < 0.8) tone[i] = 0.7;
      }
      break;
    }
    case DefectKind::Scratch:
      for (std::size_t i : chosen) tone[i] = 0.6;
      break;
  }

  for (std::size_t i : chosen) {
    const int y = static_cast<int>(i / w);
    const int x = static_cast<int>(i % w);
    for (int c = 0; c < image.channels(); ++c) {
      const double v = image.at(y, x, c);
      double nv = v + tone[i] * (1.0 - v);
      if (nv == v) nv = v * (1.0 - tone[i]);  // saturated pixel: lighten instead
      out.at(y, x, c) = nv;
    }
  }
  return out;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Pretrain: return "pretrain";
    case Split::Calibrate: return "calibrate";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(std::string_view name) {
  if (name == "pretrain") return Split::Pretrain;
  if (name == "calibrate") return Split::Calibrate;
  if (name == "test") return Split::Test;
  throw ManifestError(fmt::format("unknown split '{}'", name));
}

std::vector<const SampleRecord*> CorpusManifest::split(Split which) const {
  std::vector<const SampleRecord*> out;
  for (const auto& s : samples)
    if (s.split == which) out.push_back(&s);
  return out;
}

CorpusManifest plan_corpus(const CorpusParams& p) {
  if (p.num_writers < 1) throw ConfigError("num_writers must be at least 1");
  if (p.patch_size <= 0) throw ConfigError("patch_size must be positive");
  if (p.height <= 0 || p.height % p.patch_size != 0) {
    throw ConfigError(fmt::format("image height {} is not divisible by patch size {}", p.height, p.patch_size));
  }
  if (p.width <= 0 || p.width % p.patch_size != 0) {
    throw ConfigError(fmt::format("image width {} is not divisible by patch size {}", p.width, p.patch_size));
  }
  if (p.calibrate_per_writer < 1) throw ConfigError("calibrate_per_writer must be at least 1");
  if (p.test_per_writer < 0 || p.samples_per_writer < p.calibrate_per_writer + p.test_per_writer) {
    throw ConfigError(fmt::format("samples_per_writer {} cannot hold {} calibrate + {} test samples",
                                  p.samples_per_writer, p.calibrate_per_writer, p.test_per_writer));
  }
  if (!(p.defect_fraction >= 0.0 && p.defect_fraction <= 1.0)) {
    throw RangeError("defect_fraction outside [0,1]");
  }

  CorpusManifest m;
  m.corpus_seed = p.seed;
  m.num_writers = p.num_writers;
  m.height = p.height;
  m.width = p.width;
  m.provenance.push_back(fmt::format("generate_corpus writers={} per_writer={} size={}x{} seed={}",
                                     p.num_writers, p.samples_per_writer, p.height, p.width, p.seed));
  Rng defect_rng(sub_seed(p.seed, "corpus-defects"));
  for (int w = 0; w < p.num_writers; ++w) {
    for (int j = 0; j < p.samples_per_writer; ++j) {
      SampleRecord r;
      r.sample_id = fmt::format("w{:03d}_s{:04d}", w, j);
      r.writer_id = w;
      r.split = j < p.calibrate_per_writer                      ? Split::Calibrate
                : j < p.calibrate_per_writer + p.test_per_writer ? Split::Test
                                                                 : Split::Pretrain;
      if (uniform(defect_rng) < p.defect_fraction) {
        r.defect = DefectSpec{static_cast<DefectKind>(defect_rng() % 4), p.defect_area,
                              derive_seed(sub_seed(p.seed, "defect"), hash_string(r.sample_id))};
      }
      r.image_path = image_name(r);
      m.samples.push_back(std::move(r));
    }
  }
  return m;
}

Image render_record(const CorpusManifest& manifest, const SampleRecord& record) {
  const std::uint64_t layout_seed = hash_combine(manifest.corpus_seed, hash_string(record.sample_id));
  WriterStyle style;
  if (record.forged) {
    if (!record.true_writer_id) throw ManifestError("forged record " + record.sample_id + " lacks true_writer_id");
    style = jitter_style(writer_style(*record.true_writer_id, manifest.corpus_seed), record.forgery_seed);
  } else {
    style = writer_style(record.writer_id, manifest.corpus_seed);
  }
  Image page = render_page(style, manifest.height, manifest.width, layout_seed);
  if (record.defect) page = inject_defects(page, *record.defect);
  return page;
}

CorpusManifest generate_corpus(const CorpusParams& params, const std::filesystem::path& out_dir) {
  CorpusManifest m = plan_corpus(params);
  std::filesystem::create_directories(out_dir / "images");
  for (const auto& r : m.samples) write_png16(out_dir / r.image_path, render_record(m, r));
  save_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

CorpusManifest inject_forgeries(const CorpusManifest& manifest, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 0.5)) {
    throw RangeError(fmt::format("forgery ratio {} outside [0, 0.5]", ratio));
  }
  CorpusManifest out = manifest;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    if (out.samples[i].split == Split::Test && !out.samples[i].forged) pool.push_back(i);
  const auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(pool.size()) + 1e-9));
  if (count > 0 && out.num_writers < 2) throw ConfigError("forgeries need at least two writers");

  Rng rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  for (std::size_t i : pool) {
    SampleRecord& r = out.samples[i];
    int other = static_cast<int>(rng() % static_cast<std::uint64_t>(out.num_writers - 1));
    if (other >= r.writer_id) ++other;
    r.forged = true;
    r.true_writer_id = other;
    r.forgery_seed = derive_seed(seed, hash_string(r.sample_id));
    r.image_path = image_name(r);
  }
  out.provenance.push_back(fmt::format("inject_forgeries ratio={} seed={} forged={}", ratio, seed, count));
  return out;
}

void materialize_images(const CorpusManifest& manifest, const std::filesystem::path& manifest_dir) {
  for (const auto& r : manifest.samples) {
    const auto path = manifest_dir / r.image_path;
    if (!std::filesystem::exists(path)) write_png16(path, render_record(manifest, r));
  }
}

void save_manifest(const CorpusManifest& m, const std::filesystem::path& path) {
  std::ostringstream out;
  json header{{"type", "header"},
              {"corpus_seed", m.corpus_seed},
              {"num_writers", m.num_writers},
              {"height", m.height},
              {"width", m.width},
              {"provenance", m.provenance}};
  out << header.dump() << '\n';
  for (const auto& r : m.samples) out << record_to_json(r).dump() << '\n';
  atomic_write(path, out.str());
}

void validate_manifest(const CorpusManifest& m) {
  std::set<std::string> ids;
  std::map<int, int> calibrate_counts;
  std::set<int> writers;
  for (const auto& r : m.samples) {
    if (!ids.insert(r.sample_id).second) {
      throw ManifestError(fmt::format("duplicate sample_id '{}'", r.sample_id));
    }
    if (r.writer_id < 0 || r.writer_id >= m.num_writers) {
      throw ManifestError(fmt::format("sample '{}' has writer_id {} outside [0,{})", r.sample_id, r.writer_id,
                                      m.num_writers));
    }
    if (r.forged != r.true_writer_id.has_value()) {
      throw ManifestError(fmt::format("sample '{}': true_writer_id must be present exactly when forged", r.sample_id));
    }
    if (r.defect && !(r.defect->area_ratio >= 0.0 && r.defect->area_ratio <= 1.0)) {
      throw ManifestError(fmt::format("sample '{}': defect area_ratio outside [0,1]", r.sample_id));
    }
    writers.insert(r.writer_id);
    if (r.split == Split::Calibrate) ++calibrate_counts[r.writer_id];
  }
  if (calibrate_counts.empty()) return;
  const int expected = calibrate_counts.begin()->second;
  for (int w : writers) {
    const int have = calibrate_counts.count(w) ? calibrate_counts[w] : 0;
    if (have != expected) {
      throw ManifestError(fmt::format(
          "unbalanced calibrate split: writer {} has {} calibrate samples, writer {} has {}", w, have,
          calibrate_counts.begin()->first, expected));
    }
  }
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ManifestError("manifest not found: " + path.string());
  std::istringstream in(read_text(path));
  CorpusManifest m;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "header") {
        m.corpus_seed = j.at("corpus_seed").get<std::uint64_t>();
        m.num_writers = j.at("num_writers").get<int>();
        m.height = j.at("height").get<int>();
        m.width = j.at("width").get<int>();
        m.provenance = j.value("provenance", std::vector<std::string>{});
        have_header = true;
      } else if (type == "sample") {
        m.samples.push_back(record_from_json(j));
      } else {
        throw ManifestError("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw ManifestError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  if (!have_header) throw ManifestError("manifest lacks a header record: " + path.string());
  validate_manifest(m);
  const auto dir = path.parent_path();
  for (const auto& r : m.samples) {
    if (!std::filesystem::exists(dir / r.image_path)) {
      throw ManifestError(fmt::format("sample '{}': missing image file {}", r.sample_id, r.image_path));
    }
  }
  return m;
}

}  // namespace inkauth
