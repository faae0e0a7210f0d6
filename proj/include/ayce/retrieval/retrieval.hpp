#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ayce/core/matrix.hpp"
#include "ayce/data/dataset.hpp"
#include "ayce/data/detections.hpp"
#include "ayce/metrics/metrics.hpp"
#include "ayce/text/text.hpp"
#include "ayce/visual/visual.hpp"

namespace ayce::retrieval {

enum class Direction { VisualToText, TextToVisual };
Direction parse_direction(std::string_view s);
std::string_view direction_name(Direction d);

enum class RankOrder { Ascending, Descending };
RankOrder parse_rank_order(std::string_view s);  // asc | desc

/// "VT-LT" style label for a visual/text mode pair.
std::string variant_label(visual::VisualMode v, text::TextMode t);

struct EmbeddingStore {
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<std::string> ids;
  std::vector<Matrix> visual;
  std::vector<Matrix> text;

  std::size_t size() const { return ids.size(); }
  /// Throws EmptyStore when empty, ShapeError on inconsistent entries.
  void validate() const;
  void save(const std::filesystem::path& path) const;
  static EmbeddingStore load(const std::filesystem::path& path);
  friend bool operator==(const EmbeddingStore&, const EmbeddingStore&) = default;
};

/// One visual and one text embedding per track, in dataset order. Visual
/// frames are drawn with derive_seed(seed, track index).
EmbeddingStore embed_all(const visual::VisualModel& vmodel, const text::TextModel& tmodel, text::TextMode mode,
                         const data::Dataset& d, const data::DetectionTable& detections,
                         const visual::CropCache& crops, std::uint64_t seed);
EmbeddingStore embed_all(const std::filesystem::path& visual_ckpt, const std::filesystem::path& text_ckpt,
                         text::TextMode mode, const data::Dataset& d, const data::DetectionTable& detections,
                         const data::CropSource& crops, std::uint64_t seed);

/// queries x candidates table of min(distance matrix).
Matrix distance_table(const EmbeddingStore& store, Direction dir, metrics::Metric metric);

/// Candidates per query sorted by distance (ascending unless `order` says
/// otherwise), ties by ascending id. The truth is the same-id candidate.
metrics::RankingTable rank(const EmbeddingStore& store, Direction dir, metrics::Metric metric,
                           RankOrder order = RankOrder::Ascending);

/// JSON object query id -> ordered candidate ids, keys sorted.
void write_submission(const metrics::RankingTable& table, const std::filesystem::path& path);
std::string submission_json(const metrics::RankingTable& table);
/// Reads a submission back; each entry's truth is its own query id.
metrics::RankingTable load_submission(const std::filesystem::path& path);

struct EvalReport {
  double mrr = 0;
  double top10 = 0;
  std::vector<std::pair<std::size_t, std::size_t>> ranks;  // (rank, count), ascending rank
  std::uint64_t seed = 0;
  Direction direction = Direction::TextToVisual;
  metrics::Metric metric = metrics::Metric::Euclidean;
};

EvalReport evaluate(const metrics::RankingTable& table);
EvalReport evaluate(const EmbeddingStore& store, Direction dir, metrics::Metric metric,
                    RankOrder order = RankOrder::Ascending);
std::string report_json(const EvalReport& r);

}  // namespace ayce::retrieval
