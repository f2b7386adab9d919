#include "inkauth/prefilter.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <fmt/format.h>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "inkauth/errors.hpp"

namespace inkauth {
namespace {

// FFTW plans are created once per block size; execution through the new-array
// interface is thread-safe.
class BlockFft {
 public:
  explicit BlockFft(int n) : n_(n) {
    in_ = fftw_alloc_complex(static_cast<std::size_t>(n) * n);
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n) * n);
    plan_ = fftw_plan_dft_2d(n, n, in_, out_, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  ~BlockFft() {
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  BlockFft(const BlockFft&) = delete;
  BlockFft& operator=(const BlockFft&) = delete;

  /// Power spectrum |X_k|^2 of an n x n real block.
  void power(const std::vector<double>& block, std::vector<double>& spectrum) const {
    const std::size_t count = static_cast<std::size_t>(n_) * n_;
    std::unique_ptr<fftw_complex[], decltype(&fftw_free)> in(fftw_alloc_complex(count), &fftw_free);
    std::unique_ptr<fftw_complex[], decltype(&fftw_free)> out(fftw_alloc_complex(count), &fftw_free);
    for (std::size_t i = 0; i < count; ++i) {
      in[i][0] = block[i];
      in[i][1] = 0.0;
    }
    fftw_execute_dft(plan_, in.get(), out.get());
    spectrum.resize(count);
    for (std::size_t i = 0; i < count; ++i) spectrum[i] = out[i][0] * out[i][0] + out[i][1] * out[i][1];
  }

 private:
  int n_;
  fftw_complex* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

const BlockFft& block_fft(int n) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<BlockFft>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<BlockFft>(n);
  return *slot;
}

// Orthonormal DCT-II basis: eigenvectors of the path-graph Laplacian D^T D.
struct CosineBasis {
  Eigen::MatrixXd vectors;
  Eigen::VectorXd eigenvalues;
};

CosineBasis cosine_basis(int n) {
  CosineBasis b{Eigen::MatrixXd(n, n), Eigen::VectorXd(n)};
  for (int k = 0; k < n; ++k) {
    const double c = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i) b.vectors(i, k) = c * std::cos(std::numbers::pi * k * (i + 0.5) / n);
    b.eigenvalues(k) = 2.0 - 2.0 * std::cos(std::numbers::pi * k / n);
  }
  return b;
}

void check_blocks(const Image& image, int block_size) {
  if (block_size <= 0 || (block_size & (block_size - 1)) != 0) {
    throw ConfigError(fmt::format("block_size {} is not a power of two", block_size));
  }
  if (image.height() % block_size != 0) {
    throw ConfigError(fmt::format("image height {} is not divisible by block_size {}", image.height(), block_size));
  }
  if (image.width() % block_size != 0) {
    throw ConfigError(fmt::format("image width {} is not divisible by block_size {}", image.width(), block_size));
  }
}

// Calls fn(block_row, block_col, block_pixels) for every channel-summed block spectrum.
template <typename Fn>
void for_each_block_power(const Image& image, int bs, Fn&& fn) {
  const BlockFft& fft = block_fft(bs);
  std::vector<double> block(static_cast<std::size_t>(bs) * bs);
  std::vector<double> spectrum, total;
  const int rows = image.height() / bs;
  const int cols = image.width() / bs;
  for (int br = 0; br < rows; ++br) {
    for (int bc = 0; bc < cols; ++bc) {
      total.assign(block.size(), 0.0);
      for (int c = 0; c < image.channels(); ++c) {
        for (int y = 0; y < bs; ++y)
          for (int x = 0; x < bs; ++x) block[static_cast<std::size_t>(y) * bs + x] = image.at(br * bs + y, bc * bs + x, c);
        fft.power(block, spectrum);
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += spectrum[i];
      }
      fn(br, bc, total);
    }
  }
}

}  // namespace

std::string_view to_string(WindowProfile profile) {
  return profile == WindowProfile::RaisedCosine ? "raised-cosine" : "gaussian";
}

WindowProfile window_profile_from_string(std::string_view name) {
  if (name == "raised-cosine") return WindowProfile::RaisedCosine;
  if (name == "gaussian") return WindowProfile::Gaussian;
  throw ConfigError(fmt::format("unknown window profile '{}'", name));
}

void validate(const FilterConfig& config, const Image& image) {
  if (config.lambda_reg < 0.0) throw RangeError("lambda_reg must be non-negative");
  if (config.detail_threshold < 0.0) throw RangeError("detail_threshold must be non-negative");
  if (config.passes < 1 || config.max_passes < config.passes)
    throw ConfigError("filter passes must satisfy 1 <= passes <= max_passes");
  if (!(config.convergence_tol >= 0.0)) throw RangeError("convergence_tol must be non-negative");
  check_blocks(image, config.block_size);
}

std::vector<double> radial_window(int n, WindowProfile profile) {
  std::vector<double> w(static_cast<std::size_t>(n) * n);
  const double r_max = 0.5 * n * std::numbers::sqrt2;
  const double sigma = 0.25 * n;
  double total = 0.0;
  for (int ky = 0; ky < n; ++ky) {
    for (int kx = 0; kx < n; ++kx) {
      const double fy = std::min(ky, n - ky);
      const double fx = std::min(kx, n - kx);
      const double r = std::hypot(fy, fx);
      const double v = profile == WindowProfile::RaisedCosine ? 0.5 * (1.0 + std::cos(std::numbers::pi * r / r_max))
                                                              : std::exp(-r * r / (2.0 * sigma * sigma));
      w[static_cast<std::size_t>(ky) * n + kx] = v;
      total += v;
    }
  }
  for (double& v : w) v /= total;
  return w;
}

Image regularized_image(const Image& image, double lambda_reg) {
  if (!(lambda_reg >= 0.0)) throw RangeError(fmt::format("lambda_reg {} must be non-negative", lambda_reg));
  Image out = image;
  if (lambda_reg == 0.0) {
    clamp_unit(out);
    return out;
  }
  const int h = image.height();
  const int w = image.width();
  const CosineBasis bh = cosine_basis(h);
  const CosineBasis bw = cosine_basis(w);
  Eigen::MatrixXd plane(h, w);
  for (int c = 0; c < image.channels(); ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) plane(y, x) = image.at(y, x, c);
    Eigen::MatrixXd coeff = bh.vectors.transpose() * plane * bw.vectors;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) coeff(i, j) /= 1.0 + lambda_reg * (bh.eigenvalues(i) + bw.eigenvalues(j));
    plane = bh.vectors * coeff * bw.vectors.transpose();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(y, x, c) = std::clamp(plane(y, x), 0.0, 1.0);
  }
  return out;
}

EnergyMap block_spectral_energy(const Image& image, const FilterConfig& config) {
  check_blocks(image, config.block_size);
  EnergyMap map;
  map.rows = image.height() / config.block_size;
  map.cols = image.width() / config.block_size;
  map.per_block_energy.resize(static_cast<std::size_t>(map.rows) * map.cols);
  for_each_block_power(image, config.block_size, [&](int br, int bc, const std::vector<double>& p) {
    double e = 0.0;
    for (double v : p) e += v;
    map.per_block_energy[static_cast<std::size_t>(br) * map.cols + bc] = e;
  });
  return map;
}

namespace {

NoiseEnergies energies_of_regularized(const Image& smooth, const FilterConfig& config) {
  const auto window = radial_window(config.block_size, config.window);
  NoiseEnergies out;
  out.local.rows = smooth.height() / config.block_size;
  out.local.cols = smooth.width() / config.block_size;
  out.local.per_block_energy.resize(static_cast<std::size_t>(out.local.rows) * out.local.cols);
  double total = 0.0;
  for_each_block_power(smooth, config.block_size, [&](int br, int bc, const std::vector<double>& p) {
    double windowed = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      total += p[i];
      windowed += window[i] * p[i];
    }
    out.local.per_block_energy[static_cast<std::size_t>(br) * out.local.cols + bc] = windowed;
  });
  out.average = total / (static_cast<double>(smooth.height()) * smooth.width());
  return out;
}

}  // namespace

NoiseEnergies noise_energies(const Image& image, const FilterConfig& config) {
  validate(config, image);
  return energies_of_regularized(regularized_image(image, config.lambda_reg), config);
}

std::vector<double> noise_gains(const NoiseEnergies& e) {
  std::vector<double> g(e.local.per_block_energy.size(), 0.0);
  if (e.average <= 0.0) return g;
  for (std::size_t t = 0; t < g.size(); ++t) g[t] = std::clamp(e.local.per_block_energy[t] / e.average, 0.0, 1.0);
  return g;
}

Decomposition decompose(const Image& image, const FilterConfig& config) {
  validate(config, image);
  const Image smooth = regularized_image(image, config.lambda_reg);
  const auto gains = noise_gains(energies_of_regularized(smooth, config));
  const int bs = config.block_size;
  const int cols = image.width() / bs;

  Decomposition d{Image(image.height(), image.width(), image.channels()),
                  Image(image.height(), image.width(), image.channels())};
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const double g = gains[static_cast<std::size_t>(y / bs) * cols + x / bs];
      for (int c = 0; c < image.channels(); ++c) {
        const double v = image.at(y, x, c);
        // Capped to lie between 0 and v so both subtractions below are exact.
        const double removed = std::clamp(g * smooth.at(y, x, c), std::min(0.0, v), std::max(0.0, v));
        const double denoised = v - removed;
        d.denoised.at(y, x, c) = denoised;
        d.residual.at(y, x, c) = v - denoised;
      }
    }
  }
  return d;
}

Image noise_residual(const Image& image, const FilterConfig& config) { return decompose(image, config).residual; }

Image detail_compensation(const Image& denoised, const Image& residual, const FilterConfig& config) {
  if (!denoised.same_shape(residual)) throw ShapeError("detail_compensation: denoised/residual shape mismatch");
  if (config.detail_threshold < 0.0) throw RangeError("detail_threshold must be non-negative");
  Image out = denoised;
  auto o = out.data();
  auto r = residual.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (o[i] > config.detail_threshold) o[i] += r[i];
  }
  clamp_unit(out);
  return out;
}

Image denoise(const Image& image, const FilterConfig& config) {
  validate(config, image);
  Image current = image;
  for (int pass = 1; pass <= config.max_passes; ++pass) {
    const Decomposition d = decompose(current, config);
    Image next = detail_compensation(d.denoised, d.residual, config);
    const double change = max_abs_difference(next, current);
    current = std::move(next);
    if (pass >= config.passes && change <= config.convergence_tol) break;
  }
  return current;
}

}  // namespace inkauth
