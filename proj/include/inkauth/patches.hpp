#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "inkauth/image.hpp"

namespace inkauth {

/// M x (P*P*C) patch matrix; row i is the row-major i-th tile, flattened channel-last.
struct PatchSequence {
  Eigen::MatrixXd patches;
  int rows = 0;
  int cols = 0;
  int patch_size = 0;
  int height = 0;
  int width = 0;
  int channels = 0;

  int count() const { return rows * cols; }
  int patch_dim() const { return patch_size * patch_size * channels; }
};

PatchSequence patchify(const Image& image, int patch_size);
Image unpatchify(const PatchSequence& seq);

struct AugmentPolicy {
  struct Blur {
    double probability = 0.5;
    double sigma_min = 0.3;
    double sigma_max = 1.0;
  } gaussian_blur;
  struct Mixup {
    double probability = 0.2;
    double alpha = 0.4;
  } mixup;
  struct Flip {
    double probability = 0.0;
  } horizontal_flip;
  std::uint64_t seed = 0;
};

void validate(const AugmentPolicy& policy);

Image gaussian_blur(const Image& image, double sigma);
Image horizontal_flip(const Image& image);
/// lambda * a + (1 - lambda) * b.
Image mixup(const Image& a, const Image& b, double lambda);

/// Seeded augmentation: mixup (coefficient ~ Beta(alpha, alpha)), then blur, then
/// flip, each firing with its probability. `draw_key` identifies the sample and
/// view; identical (policy.seed, draw_key) give identical output. Throws StateError
/// when mixup fires without a partner.
Image augment(const Image& image, const AugmentPolicy& policy, std::uint64_t draw_key,
              const Image* partner = nullptr);

}  // namespace inkauth
