#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "ayce/data/dataset.hpp"

namespace ayce::data {

struct Summary {
  double mean = 0;
  double min = 0;
  double max = 0;
};

/// Mean number of distinct values per caption triplet.
struct AttributeDistinctness {
  double types = 0;
  double colors = 0;
  double actions = 0;
};

struct DatasetStats {
  std::size_t n_tracks = 0;
  Summary frames;
  Summary caption_words;
  std::optional<AttributeDistinctness> distinct;
};

/// Distinct-attribute means are computed from per-caption attributes
/// (case-insensitive match) and omitted when no track carries them.
DatasetStats compute_stats(const Dataset& d);

std::string stats_to_json(const DatasetStats& s);

std::size_t word_count(const std::string& sentence);

}  // namespace ayce::data
