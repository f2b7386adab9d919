#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace inkauth {

/// Versioned container of named numeric arrays plus named text entries.
///
/// Layout (little-endian):
///   magic "INKCKPT1" | u32 version | u32 entry count
///   per entry: u8 kind (0 = f64 matrix, 1 = text) | u32 name length | name bytes |
///     matrix: u32 rows | u32 cols | rows*cols f64, column-major
///     text:   u64 byte length | bytes
/// Entries are written in name order, so equal containers serialize to equal bytes.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, Eigen::MatrixXd> arrays;
  std::map<std::string, std::string> text;

  const Eigen::MatrixXd& array(const std::string& name) const;
  const std::string& text_entry(const std::string& name) const;
  bool has_array(const std::string& name) const { return arrays.contains(name); }
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace inkauth
