#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ayce::data {

inline constexpr std::size_t kFeatureWidth = 256;
inline constexpr std::size_t kObjectWidth = 1 + 4 + kFeatureWidth;  // 261

/// One object embedding: class, normalised (x, y, w, h) box, features.
struct ObjectRecord {
  double cls = 0;
  std::array<double, 4> box{};
  std::vector<double> feat = std::vector<double>(kFeatureWidth, 0.0);

  friend bool operator==(const ObjectRecord&, const ObjectRecord&) = default;
};

/// A detector output before confidence/class filtering.
struct RawDetection {
  double score = 0;
  int cls = 0;
  std::array<double, 4> box{};
  std::vector<double> feat;
};

/// Detector class bookkeeping. The defaults are the COCO indices of road
/// users and road furniture; the tracked vehicle gets a class one past the
/// largest allowed index.
struct DetectorClasses {
  std::set<int> allowed{0, 1, 2, 3, 5, 7, 9, 11};
  int sentinel() const { return *allowed.rbegin() + 1; }
};

/// Keeps detections with score >= threshold and an allowed class, in order.
/// Throws FeatureWidthError when a feature vector is not 256 wide.
std::vector<ObjectRecord> filter_detections(std::span<const RawDetection> records, const std::set<int>& allowed,
                                            double threshold = 0.85);

/// Sidecar detections keyed by (track id, frame position within the track).
class DetectionTable {
 public:
  using Key = std::pair<std::string, std::int64_t>;

  void set(const std::string& track_id, std::int64_t frame, std::vector<ObjectRecord> objects);
  /// Objects for a frame; empty when the frame has no entry.
  const std::vector<ObjectRecord>& at(const std::string& track_id, std::int64_t frame) const;
  std::size_t size() const { return entries_.size(); }
  const std::map<Key, std::vector<ObjectRecord>>& entries() const { return entries_; }

  friend bool operator==(const DetectionTable&, const DetectionTable&) = default;

 private:
  std::map<Key, std::vector<ObjectRecord>> entries_;
};

DetectionTable load_detections(const std::filesystem::path& path);
void save_detections(const DetectionTable& table, const std::filesystem::path& path);

}  // namespace ayce::data
