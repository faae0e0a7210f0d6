#pragma once

#include <filesystem>
#include <memory>

#include "ayce/data/dataset.hpp"
#include "ayce/data/image.hpp"
#include "ayce/data/synthetic.hpp"

namespace ayce::data {

/// Supplies the image region of the tracked vehicle for one frame.
class CropSource {
 public:
  virtual ~CropSource() = default;
  virtual Image crop(const TrackRecord& track, std::size_t frame_pos) const = 0;
};

/// Renders synthetic crops in memory (identical pixels to the PNG files).
class SyntheticCropSource final : public CropSource {
 public:
  explicit SyntheticCropSource(SyntheticSpec spec) : spec_(std::move(spec)) {}
  Image crop(const TrackRecord& track, std::size_t frame_pos) const override;

 private:
  SyntheticSpec spec_;
};

/// Reads `<root>/<track id>/<frame pos>.png` for integer frame references, and
/// crops the tracking box out of the referenced image for path references.
class DirectoryCropSource final : public CropSource {
 public:
  explicit DirectoryCropSource(std::filesystem::path root) : root_(std::move(root)) {}
  Image crop(const TrackRecord& track, std::size_t frame_pos) const override;

 private:
  std::filesystem::path root_;
};

}  // namespace ayce::data
