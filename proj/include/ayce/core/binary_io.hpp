#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ayce/core/matrix.hpp"

namespace ayce {

/// Little-endian append-only buffer used by checkpoint writers.
class BinaryWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(std::string_view s);
  void f64s(const std::vector<double>& v);
  void matrix(const Matrix& m);

  const std::vector<char>& bytes() const { return bytes_; }

  /// Writes to `path` through a temporary sibling and an atomic rename.
  void commit(const std::filesystem::path& path) const;

 private:
  std::vector<char> bytes_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);
  explicit BinaryReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  void expect_magic(std::string_view tag);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  std::vector<double> f64s();
  Matrix matrix();
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const;

  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace ayce
