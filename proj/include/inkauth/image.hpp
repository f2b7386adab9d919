#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace inkauth {

/// H x W x C image of doubles, channel-last, row-major. Pixel values live in [0,1]
/// unless an operation documents otherwise (residuals may be negative).
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels = 1, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

void clamp_unit(Image& image);
double mean_squared_error(const Image& a, const Image& b);
/// Peak signal-to-noise ratio in dB for unit peak. Identical images give +inf.
double psnr(const Image& a, const Image& b);
double max_abs_difference(const Image& a, const Image& b);

}  // namespace inkauth
