#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ayce::data {

/// 8-bit interleaved RGB image.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
  std::uint8_t* px(int x, int y) { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* px(int x, int y) const { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
  friend bool operator==(const Image&, const Image&) = default;
};

void write_png(const Image& img, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

/// Sub-rectangle, clipped to the image; throws BoxOutOfImage when empty.
Image crop(const Image& img, int x, int y, int w, int h);

/// Bilinear resize to (width, height) as planar float channels in [0, 1]:
/// out[(c * height + y) * width + x].
std::vector<double> resize_to_planar(const Image& img, int width, int height);

}  // namespace ayce::data
