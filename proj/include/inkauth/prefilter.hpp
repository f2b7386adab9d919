#pragma once

#include <string_view>
#include <vector>

#include "inkauth/image.hpp"

namespace inkauth {

enum class WindowProfile { RaisedCosine, Gaussian };

std::string_view to_string(WindowProfile profile);
WindowProfile window_profile_from_string(std::string_view name);

struct FilterConfig {
  int block_size = 16;        // power of two, divides H and W
  double lambda_reg = 8.0;    // smoothness weight of the regularized image
  WindowProfile window = WindowProfile::RaisedCosine;
  double detail_threshold = 0.25;
  int passes = 2;             // minimum filter applications inside denoise()
  int max_passes = 256;
  double convergence_tol = 1e-3;  // stop once a pass moves no pixel by more than this
};

/// Throws ConfigError/RangeError for an invalid config or incompatible image.
void validate(const FilterConfig& config, const Image& image);

struct EnergyMap {
  std::vector<double> per_block_energy;  // row-major over the block grid
  int rows = 0;
  int cols = 0;

  double at(int r, int c) const { return per_block_energy[static_cast<std::size_t>(r) * cols + c]; }
};

struct NoiseEnergies {
  double average = 0.0;  // E_N
  EnergyMap local;       // E_B
};

/// Radial frequency window over a block_size x block_size spectrum (row-major,
/// unshifted FFT layout), normalized to sum to 1. Low frequencies carry the weight.
std::vector<double> radial_window(int block_size, WindowProfile profile);

/// argmin_u |u - I|^2 + lambda |grad u|^2 with first differences and reflective
/// boundary, solved exactly in the cosine eigenbasis; clamped to [0,1].
Image regularized_image(const Image& image, double lambda_reg);

/// Sum of squared moduli of the unnormalized forward 2-D DFT of each block
/// (channels summed).
EnergyMap block_spectral_energy(const Image& image, const FilterConfig& config);

/// E_N = (1/(H W)) sum_t energy_t and E_B[t] = window-weighted spectral energy of
/// block t, both measured on the regularized image.
NoiseEnergies noise_energies(const Image& image, const FilterConfig& config);

/// Per-block noise gain clamp(E_B[t]/E_N, 0, 1); all zero when E_N = 0.
std::vector<double> noise_gains(const NoiseEnergies& energies);

struct Decomposition {
  Image residual;  // the noise component S(I)
  Image denoised;  // image - residual; denoised + residual == image bit-for-bit
};

/// Residual of block t is gain_t times the regularized (smooth) component of the
/// block, capped per pixel to [min(0,v), max(0,v)]. A blank image (E_N = 0) has a zero residual.
Decomposition decompose(const Image& image, const FilterConfig& config);

Image noise_residual(const Image& image, const FilterConfig& config);

/// Re-identifies strokes removed with the residual: wherever the denoised value
/// still stands above detail_threshold the pixel is texture, and its residual is
/// added back. Output clamped to [0,1].
Image detail_compensation(const Image& denoised, const Image& residual, const FilterConfig& config);

/// decompose -> subtract -> detail_compensation, repeated at least `passes` times
/// and until a pass changes no value by more than convergence_tol (at most max_passes).
Image denoise(const Image& image, const FilterConfig& config);

}  // namespace inkauth
