#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace inkauth {

/// Unique-per-process temporary path next to `target` (same directory, so rename is atomic).
std::filesystem::path temp_sibling(const std::filesystem::path& target);

/// Writes `contents` via temp-then-rename; creates parent directories.
void atomic_write(const std::filesystem::path& target, std::string_view contents);

std::string read_text(const std::filesystem::path& path);

}  // namespace inkauth
