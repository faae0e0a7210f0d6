#include "ayce/core/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ayce/core/errors.hpp"

namespace ayce {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian hosts");

namespace {

template <typename T>
void append(std::vector<char>& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

}  // namespace

void BinaryWriter::u32(std::uint32_t v) { append(bytes_, v); }
void BinaryWriter::u64(std::uint64_t v) { append(bytes_, v); }
void BinaryWriter::f64(double v) { append(bytes_, v); }

void BinaryWriter::str(std::string_view s) {
  u64(s.size());
  bytes_.insert(bytes_.end(), s.begin(), s.end());
}

void BinaryWriter::f64s(const std::vector<double>& v) {
  u64(v.size());
  const auto* p = reinterpret_cast<const char*>(v.data());
  bytes_.insert(bytes_.end(), p, p + v.size() * sizeof(double));
}

void BinaryWriter::matrix(const Matrix& m) {
  u64(m.rows);
  u64(m.cols);
  f64s(m.data);
}

void BinaryWriter::commit(const std::filesystem::path& path) const {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointIOError("cannot open " + tmp.string() + " for writing");
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw CheckpointIOError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointIOError("cannot rename " + tmp.string() + ": " + ec.message());
}

BinaryReader::BinaryReader(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointIOError("cannot open " + path.string());
  bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void BinaryReader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n) throw CheckpointIOError("truncated checkpoint");
}

void BinaryReader::expect_magic(std::string_view tag) {
  need(tag.size());
  if (std::string_view(bytes_.data() + pos_, tag.size()) != tag)
    throw CheckpointIOError("bad magic, expected " + std::string(tag));
  pos_ += tag.size();
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, bytes_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  std::uint64_t v;
  std::memcpy(&v, bytes_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

double BinaryReader::f64() {
  need(8);
  double v;
  std::memcpy(&v, bytes_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::string BinaryReader::str() {
  const auto n = u64();
  need(n);
  std::string s(bytes_.data() + pos_, n);
  pos_ += n;
  return s;
}

std::vector<double> BinaryReader::f64s() {
  const auto n = u64();
  need(n * sizeof(double));
  std::vector<double> v(n);
  std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
  pos_ += n * sizeof(double);
  return v;
}

Matrix BinaryReader::matrix() {
  Matrix m;
  m.rows = u64();
  m.cols = u64();
  m.data = f64s();
  if (m.data.size() != m.rows * m.cols) throw CheckpointIOError("matrix payload size mismatch");
  return m;
}

}  // namespace ayce
