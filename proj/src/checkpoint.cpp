#include "inkauth/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

#include "inkauth/errors.hpp"
#include "inkauth/fileio.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace inkauth {

namespace {

constexpr char kMagic[8] = {'I', 'N', 'K', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }

  const char* take(std::size_t n) {
    if (n > data_.size() - pos_) throw ManifestError(fmt::format("checkpoint {} is truncated", source_));
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  const std::string& data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

const Eigen::MatrixXd& Checkpoint::array(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw ManifestError(fmt::format("checkpoint has no array '{}'", name));
  return it->second;
}

const std::string& Checkpoint::text_entry(const std::string& name) const {
  auto it = text.find(name);
  if (it == text.end()) throw ManifestError(fmt::format("checkpoint has no text entry '{}'", name));
  return it->second;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, Checkpoint::kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.arrays.size() + checkpoint.text.size()));
  for (const auto& [name, m] : checkpoint.arrays) {
    put<std::uint8_t>(out, 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  for (const auto& [name, value] : checkpoint.text) {
    put<std::uint8_t>(out, 1);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint64_t>(out, value.size());
    out += value;
  }
  atomic_write(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string data = read_text(path);
  Reader r(data, path.string());
  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0)
    throw ManifestError(fmt::format("{} is not a checkpoint file", path.string()));
  const auto version = r.get<std::uint32_t>();
  if (version > Checkpoint::kVersion)
    throw ManifestError(fmt::format("checkpoint version {} is newer than supported {}", version, Checkpoint::kVersion));
  const auto count = r.get<std::uint32_t>();
  Checkpoint c;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto kind = r.get<std::uint8_t>();
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.take(name_len), name_len);
    if (kind == 0) {
      const auto rows = r.get<std::uint32_t>();
      const auto cols = r.get<std::uint32_t>();
      Eigen::MatrixXd m(rows, cols);
      const std::size_t bytes = static_cast<std::size_t>(rows) * cols * sizeof(double);
      const char* src = r.take(bytes);
      if (bytes > 0) std::memcpy(m.data(), src, bytes);
      c.arrays.emplace(std::move(name), std::move(m));
    } else if (kind == 1) {
      const auto len = r.get<std::uint64_t>();
      c.text.emplace(std::move(name), std::string(r.take(len), len));
    } else {
      throw ManifestError(fmt::format("checkpoint entry '{}' has unknown kind {}", name, kind));
    }
  }
  return c;
}

}  // namespace inkauth
