#include "ayce/data/stats.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <set>
#include <sstream>

#include "ayce/core/errors.hpp"
#include "json.hpp"

namespace ayce::data {

std::size_t word_count(const std::string& sentence) {
  std::istringstream in(sentence);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

namespace {

struct Accumulator {
  double sum = 0;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  std::size_t n = 0;
  void add(double x) {
    sum += x;
    min = std::min(min, x);
    max = std::max(max, x);
    ++n;
  }
  Summary summary() const { return {sum / static_cast<double>(n), min, max}; }
};

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

template <typename Get>
double distinct_count(const std::array<CaptionAttributes, 3>& ca, Get get) {
  std::set<std::string> seen;
  for (const auto& a : ca)
    if (const auto& v = get(a)) seen.insert(lower(*v));
  return static_cast<double>(seen.size());
}

}  // namespace

DatasetStats compute_stats(const Dataset& d) {
  if (d.tracks.empty()) throw EmptyDataset("compute_stats on an empty dataset");
  DatasetStats s;
  s.n_tracks = d.tracks.size();
  Accumulator frames, words, types, colors, actions;
  for (const auto& t : d.tracks) {
    frames.add(static_cast<double>(t.frame_count()));
    for (const auto& c : t.captions) words.add(static_cast<double>(word_count(c)));
    if (t.caption_attributes) {
      types.add(distinct_count(*t.caption_attributes, [](const CaptionAttributes& a) -> const auto& { return a.type; }));
      colors.add(distinct_count(*t.caption_attributes, [](const CaptionAttributes& a) -> const auto& { return a.color; }));
      actions.add(distinct_count(*t.caption_attributes, [](const CaptionAttributes& a) -> const auto& { return a.action; }));
    }
  }
  s.frames = frames.summary();
  s.caption_words = words.summary();
  if (types.n > 0) s.distinct = AttributeDistinctness{types.summary().mean, colors.summary().mean, actions.summary().mean};
  return s;
}

std::string stats_to_json(const DatasetStats& s) {
  using nlohmann::json;
  auto summary = [](const Summary& x) { return json{{"mean", x.mean}, {"min", x.min}, {"max", x.max}}; };
  json j;
  j["n_tracks"] = s.n_tracks;
  j["frames"] = summary(s.frames);
  j["caption_words"] = summary(s.caption_words);
  if (s.distinct)
    j["distinct_per_triplet"] = {{"types", s.distinct->types}, {"colors", s.distinct->colors}, {"actions", s.distinct->actions}};
  return j.dump(2);
}

}  // namespace ayce::data
