#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ayce/data/dataset.hpp"
#include "ayce/data/detections.hpp"
#include "ayce/data/image.hpp"

namespace ayce::data {

/// Per-caption attribute corruption: with probability `swap` the caption
/// names a different value (uniform over the others), and independently with
/// probability `drop` it omits the attribute. A triplet never omits an
/// attribute from all three captions.
struct AttributeNoise {
  double swap = 0.0;
  double drop = 0.0;
};

struct SyntheticSpec {
  std::size_t n_tracks = 32;

  // Frame counts: round(exp(N(log_mean, log_sigma))) clipped to [min, max].
  double frames_log_mean = 2.5;
  double frames_log_sigma = 0.35;
  int frames_min = 6;
  int frames_max = 24;

  std::vector<std::string> colors{"red", "blue", "white", "black", "silver", "green", "yellow", "gray"};
  std::vector<std::string> types{"sedan", "suv", "pickup truck", "van", "bus", "hatchback"};
  std::vector<std::string> actions{"goes straight",      "turns left",         "turns right", "stops",
                                   "changes lanes left", "changes lanes right", "slows down",  "speeds up",
                                   "makes a u-turn",     "backs up"};
  /// Placeholders {color}, {type}, {action}. A dropped color disappears, a
  /// dropped type reads "vehicle", a dropped action reads "is on the road".
  std::vector<std::string> templates{
      "A {color} {type} {action}.",
      "The {color} {type} {action} at the intersection.",
      "A {color} {type} {action} down the street.",
      "{color} {type} {action} on the road.",
  };

  AttributeNoise type_noise;
  AttributeNoise color_noise;
  AttributeNoise action_noise;

  int crop_width = 64;   // native size of rendered crops
  int crop_height = 48;
  int image_width = 1920;
  int image_height = 1080;

  double distractor_mean = 2.0;  // Poisson mean of raw detections per frame
  int distractor_max = 5;
  double self_detection_prob = 0.5;  // the detector also fires on the target

  void validate() const;  // throws SpecError

  /// Swap probabilities solved so that the expected number of distinct
  /// types / colors / actions per triplet is 2.07 / 1.85 / 2.63, with the
  /// observed per-sentence omission rates; frame counts around 81 in [1, 3620].
  static SyntheticSpec paper_calibrated();

  static SyntheticSpec from_json(const std::string& text);
  static SyntheticSpec load(const std::filesystem::path& path);
  std::string to_json() const;
};

/// Expected number of distinct values among the captions of one triplet
/// under AttributeNoise over `k` possible values. Closed form, used to
/// calibrate specs.
double expected_distinct(std::size_t k, const AttributeNoise& noise);

/// Smallest swap probability whose expected_distinct equals `target` for the
/// given drop rate; throws SpecError if unreachable.
double calibrate_swap(std::size_t k, double drop, double target);

struct SyntheticCorpus {
  Dataset dataset;
  DetectionTable detections;
};

/// Deterministic in (spec, seed). Captions come from templates over the
/// (possibly corrupted) attributes; detections are already confidence and
/// class filtered. The dataset does not depend on `with_detections`.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed, bool with_detections = true);

/// Procedural crop of the tracked vehicle in frame `frame_pos`: a solid
/// glyph in the vehicle color, shaped by type, oriented by heading, over a
/// textured background. Depends only on (spec, track, frame_pos).
Image render_crop(const SyntheticSpec& spec, const TrackRecord& track, std::size_t frame_pos);

/// Writes dataset.json, detections.jsonl, spec.json and crops/<id>/<frame>.png.
void write_corpus(const SyntheticSpec& spec, const SyntheticCorpus& corpus, const std::filesystem::path& out_dir,
                  bool with_crops = true);

}  // namespace ayce::data
