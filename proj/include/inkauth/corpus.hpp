#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "inkauth/image.hpp"

namespace inkauth {

/// Ink intensity of rendered strokes; paper is 0. Kept below 1 so defect blending
/// always moves a pixel.
inline constexpr double kInkLevel = 0.9;

struct WriterStyle {
  int writer_id = 0;
  double stroke_thickness = 1.5;  // pixels
  double slant = 0.0;             // radians, shear of glyph verticals
  double glyph_density = 1.0;     // probability a glyph slot is filled, in (0,1]
  std::uint64_t texture_seed = 0; // determines the glyph atlas
};

/// Deterministic style for a writer. Distinct ids give distinct (thickness, slant,
/// density) triples: each coordinate walks an irrational rotation.
WriterStyle writer_style(int writer_id, std::uint64_t corpus_seed);

/// Style transplant used for forgeries: `base` with each parameter scaled by a
/// factor drawn uniformly from [0.9, 1.1].
WriterStyle jitter_style(const WriterStyle& base, std::uint64_t seed);

/// Pseudo-text page: rows of glyphs sampled from the writer's atlas.
Image render_page(const WriterStyle& style, int height, int width, std::uint64_t layout_seed);

enum class DefectKind { Scratch, Stain, Fold, CreaseShadow };

std::string_view to_string(DefectKind kind);
DefectKind defect_kind_from_string(std::string_view name);

struct DefectSpec {
  DefectKind kind = DefectKind::Stain;
  double area_ratio = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const DefectSpec&, const DefectSpec&) = default;
};

/// Exactly round(area_ratio * H * W) pixel positions, row-major flags.
std::vector<bool> defect_mask(int height, int width, const DefectSpec& spec);

/// Darkens the pixels of the defect mask (all channels). Pixels outside the mask are
/// untouched and every mask pixel changes value. Throws RangeError for
/// area_ratio outside [0,1].
Image inject_defects(const Image& image, const DefectSpec& spec);

enum class Split { Pretrain, Calibrate, Test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct SampleRecord {
  std::string sample_id;
  int writer_id = 0;  // claimed writer
  Split split = Split::Pretrain;
  std::optional<DefectSpec> defect;
  bool forged = false;
  std::optional<int> true_writer_id;  // set iff forged
  std::uint64_t forgery_seed = 0;
  std::string image_path;  // relative to the manifest directory

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct CorpusManifest {
  std::vector<SampleRecord> samples;
  std::uint64_t corpus_seed = 0;
  int num_writers = 0;
  int height = 0;
  int width = 0;
  std::vector<std::string> provenance;

  std::vector<const SampleRecord*> split(Split which) const;

  friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

struct CorpusParams {
  int num_writers = 8;
  int samples_per_writer = 20;
  int height = 128;
  int width = 128;
  std::uint64_t seed = 7;
  int patch_size = 16;
  int calibrate_per_writer = 5;
  int test_per_writer = 5;
  /// Fraction of samples that receive a random defect at generation time.
  double defect_fraction = 0.0;
  double defect_area = 0.10;
};

/// Builds the manifest without touching the filesystem. Validation errors:
/// ConfigError for non-divisible sizes or impossible split counts.
CorpusManifest plan_corpus(const CorpusParams& params);

/// Renders a record (genuine or forged, with its defect if any). Pure.
Image render_record(const CorpusManifest& manifest, const SampleRecord& record);

/// plan_corpus + render every sample into `out_dir/images` + write
/// `out_dir/manifest.jsonl`.
CorpusManifest generate_corpus(const CorpusParams& params, const std::filesystem::path& out_dir);

/// Marks floor(ratio * |unforged test samples|) unforged test samples as forged.
/// Throws RangeError unless 0 <= ratio <= 0.5.
CorpusManifest inject_forgeries(const CorpusManifest& manifest, double ratio, std::uint64_t seed);

/// Writes any image referenced by the manifest that is missing on disk.
void materialize_images(const CorpusManifest& manifest, const std::filesystem::path& manifest_dir);

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);

/// Parses and validates. ManifestError on duplicate ids, missing images, unbalanced
/// calibrate split or inconsistent forgery fields.
CorpusManifest load_manifest(const std::filesystem::path& path);

/// Structural checks shared by load_manifest (file existence excluded).
void validate_manifest(const CorpusManifest& manifest);

}  // namespace inkauth
