#pragma once

#include <filesystem>

#include "inkauth/image.hpp"

namespace inkauth {

/// Reads an 8- or 16-bit grayscale PNG and normalizes samples to [0,1].
Image read_png(const std::filesystem::path& path);

/// Writes a single-channel image as 16-bit grayscale PNG (values clamped to [0,1]).
/// The file is written to a temporary sibling and renamed into place.
void write_png16(const std::filesystem::path& path, const Image& image);

/// 8-bit variant used for reports.
void write_png8(const std::filesystem::path& path, const Image& image);

}  // namespace inkauth
