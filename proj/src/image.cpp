#include "inkauth/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "inkauth/errors.hpp"

namespace inkauth {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw ShapeError("image dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

void clamp_unit(Image& image) {
  for (double& v : image.data()) v = std::clamp(v, 0.0, 1.0);
}

double mean_squared_error(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("mean_squared_error: shape mismatch");
  double acc = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = da[i] - db[i];
    acc += d * d;
  }
  return acc / static_cast<double>(da.size());
}

double psnr(const Image& a, const Image& b) {
  const double mse = mean_squared_error(a, b);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

double max_abs_difference(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_difference: shape mismatch");
  double m = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) m = std::max(m, std::abs(da[i] - db[i]));
  return m;
}

}  // namespace inkauth
