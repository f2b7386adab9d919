#include "inkauth/patches.hpp"

#include <cmath>
#include <fmt/format.h>

#include "inkauth/errors.hpp"
#include "inkauth/seeding.hpp"

namespace inkauth {

PatchSequence patchify(const Image& image, int patch_size) {
  if (patch_size <= 0) throw ConfigError(fmt::format("patch size {} must be positive", patch_size));
  if (image.height() % patch_size != 0)
    throw ConfigError(fmt::format("patch size {} does not divide height {}", patch_size, image.height()));
  if (image.width() % patch_size != 0)
    throw ConfigError(fmt::format("patch size {} does not divide width {}", patch_size, image.width()));

  PatchSequence seq;
  seq.patch_size = patch_size;
  seq.rows = image.height() / patch_size;
  seq.cols = image.width() / patch_size;
  seq.height = image.height();
  seq.width = image.width();
  seq.channels = image.channels();
  seq.patches.resize(seq.count(), seq.patch_dim());
  for (int gr = 0; gr < seq.rows; ++gr)
    for (int gc = 0; gc < seq.cols; ++gc) {
      const int i = gr * seq.cols + gc;
      int k = 0;
      for (int y = 0; y < patch_size; ++y)
        for (int x = 0; x < patch_size; ++x)
          for (int c = 0; c < seq.channels; ++c)
            seq.patches(i, k++) = image.at(gr * patch_size + y, gc * patch_size + x, c);
    }
  return seq;
}

Image unpatchify(const PatchSequence& seq) {
  const int p = seq.patch_size;
  if (p <= 0 || seq.rows * p != seq.height || seq.cols * p != seq.width || seq.channels <= 0)
    throw ShapeError("patch sequence metadata is inconsistent");
  if (seq.patches.rows() != seq.count() || seq.patches.cols() != seq.patch_dim())
    throw ShapeError(fmt::format("patch matrix is {}x{}, metadata implies {}x{}", seq.patches.rows(),
                                 seq.patches.cols(), seq.count(), seq.patch_dim()));
  Image out(seq.height, seq.width, seq.channels);
  for (int gr = 0; gr < seq.rows; ++gr)
    for (int gc = 0; gc < seq.cols; ++gc) {
      const int i = gr * seq.cols + gc;
      int k = 0;
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x)
          for (int c = 0; c < seq.channels; ++c) out.at(gr * p + y, gc * p + x, c) = seq.patches(i, k++);
    }
  return out;
}

void validate(const AugmentPolicy& policy) {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw RangeError(fmt::format("{} probability {} outside [0,1]", name, p));
  };
  prob(policy.gaussian_blur.probability, "blur");
  prob(policy.mixup.probability, "mixup");
  prob(policy.horizontal_flip.probability, "flip");
  if (!(policy.gaussian_blur.sigma_min > 0.0) || policy.gaussian_blur.sigma_max < policy.gaussian_blur.sigma_min)
    throw RangeError("blur sigma range must be positive and ordered");
  if (!(policy.mixup.alpha > 0.0)) throw RangeError("mixup alpha must be positive");
}

namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

}  // namespace

Image gaussian_blur(const Image& image, double sigma) {
  if (!(sigma > 0.0)) throw RangeError("blur sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& k : kernel) k /= total;

  Image tmp(image.height(), image.width(), image.channels());
  Image out(image.height(), image.width(), image.channels());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < image.channels(); ++c) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * image.at(y, reflect(x + i, image.width()), c);
        tmp.at(y, x, c) = s;
      }
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < image.channels(); ++c) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * tmp.at(reflect(y + i, image.height()), x, c);
        out.at(y, x, c) = s;
      }
  clamp_unit(out);
  return out;
}

Image horizontal_flip(const Image& image) {
  Image out(image.height(), image.width(), image.channels());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < image.channels(); ++c) out.at(y, x, c) = image.at(y, image.width() - 1 - x, c);
  return out;
}

Image mixup(const Image& a, const Image& b, double lambda) {
  if (!a.same_shape(b)) throw ShapeError("mixup partner shape differs");
  Image out(a.height(), a.width(), a.channels());
  auto da = a.data();
  auto db = b.data();
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = lambda * da[i] + (1.0 - lambda) * db[i];
  return out;
}

Image augment(const Image& image, const AugmentPolicy& policy, std::uint64_t draw_key, const Image* partner) {
  validate(policy);
  Rng rng(hash_combine(policy.seed, draw_key));
  // Every draw happens regardless of which transforms fire, so one transform's
  // probability never shifts another's randomness.
  const bool do_mix = uniform(rng) < policy.mixup.probability;
  const double lambda = beta_sample(rng, policy.mixup.alpha, policy.mixup.alpha);
  const bool do_blur = uniform(rng) < policy.gaussian_blur.probability;
  const double sigma = uniform(rng, policy.gaussian_blur.sigma_min, policy.gaussian_blur.sigma_max);
  const bool do_flip = uniform(rng) < policy.horizontal_flip.probability;

  Image out = image;
  if (do_mix) {
    if (partner == nullptr) throw StateError("mixup fired but no partner image was supplied");
    out = mixup(out, *partner, lambda);
  }
  if (do_blur) out = gaussian_blur(out, sigma);
  if (do_flip) out = horizontal_flip(out);
  clamp_unit(out);
  return out;
}

}  // namespace inkauth
