#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace ayce::data {

/// Either a synthetic frame index or a path to a frame image.
using FrameRef = std::variant<std::int64_t, std::string>;

/// Pixel-space tracking box: top-left corner plus size.
struct Box {
  double x = 0, y = 0, w = 0, h = 0;
  friend bool operator==(const Box&, const Box&) = default;
};

/// Ground-truth vehicle attributes (synthetic data only).
struct Attributes {
  std::string color, type, action;
  friend bool operator==(const Attributes&, const Attributes&) = default;
};

/// Attributes mentioned by one caption; an empty optional means the caption
/// omits that attribute.
struct CaptionAttributes {
  std::optional<std::string> color, type, action;
  friend bool operator==(const CaptionAttributes&, const CaptionAttributes&) = default;
};

struct TrackRecord {
  std::string id;
  std::vector<FrameRef> frames;
  std::vector<Box> boxes;
  std::array<std::string, 3> captions;
  std::optional<Attributes> attributes;
  std::optional<std::array<CaptionAttributes, 3>> caption_attributes;

  std::size_t frame_count() const { return frames.size(); }
  friend bool operator==(const TrackRecord&, const TrackRecord&) = default;
};

struct Dataset {
  std::vector<TrackRecord> tracks;
  int image_width = 1920;
  int image_height = 1080;

  std::size_t size() const { return tracks.size(); }
  /// Index of the track with this id; throws SchemaError if absent.
  std::size_t index_of(const std::string& id) const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Throws SchemaError / CaptionCountError naming the track and field.
void validate_track(const TrackRecord& t);
void validate_dataset(const Dataset& d);

Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(const std::string& json_text);
void save_dataset(const Dataset& d, const std::filesystem::path& path);
std::string dataset_to_json(const Dataset& d);

/// Track id -> per-caption attributes, for corpora whose captions carry no
/// inline attribute labels. Unknown ids are rejected.
void apply_attribute_file(Dataset& d, const std::filesystem::path& path);

}  // namespace ayce::data
