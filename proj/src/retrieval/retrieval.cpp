#include "ayce/retrieval/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "ayce/core/errors.hpp"
#include "ayce/core/rng.hpp"
#include "ayce/data/sampling.hpp"
#include "ayce/kernels/kernels.hpp"
#include "json.hpp"

namespace ayce::retrieval {

using nlohmann::json;

Direction parse_direction(std::string_view s) {
  if (s == "visual_to_text") return Direction::VisualToText;
  if (s == "text_to_visual") return Direction::TextToVisual;
  throw ConfigError("unknown direction '" + std::string(s) + "' (expected visual_to_text|text_to_visual)");
}

std::string_view direction_name(Direction d) {
  return d == Direction::VisualToText ? "visual_to_text" : "text_to_visual";
}

RankOrder parse_rank_order(std::string_view s) {
  if (s == "asc") return RankOrder::Ascending;
  if (s == "desc") return RankOrder::Descending;
  throw ConfigError("unknown rank order '" + std::string(s) + "' (expected asc|desc)");
}

std::string variant_label(visual::VisualMode v, text::TextMode t) {
  return std::string(v == visual::VisualMode::VSO ? "VS" : "VT") + "-" + (t == text::TextMode::LTO ? "LT" : "LS");
}

void EmbeddingStore::validate() const {
  if (ids.empty()) throw EmptyStore("embedding store is empty");
  if (visual.size() != ids.size() || text.size() != ids.size())
    throw ShapeError("embedding store sides differ in length");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!visual[i].same_shape(visual[0]) || !text[i].same_shape(text[0]))
      throw ShapeError("embedding arity differs at track '" + ids[i] + "'");
    if (visual[i].cols != text[i].cols) throw ShapeError("embedding widths differ at track '" + ids[i] + "'");
  }
}

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols) throw SchemaError("ragged embedding matrix");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Matrix stack(const std::vector<Matrix>& parts) {
  Matrix out(parts.size() * parts[0].rows, parts[0].cols);
  for (std::size_t i = 0; i < parts.size(); ++i)
    std::copy(parts[i].data.begin(), parts[i].data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * parts[i].size()));
  return out;
}

}  // namespace

void EmbeddingStore::save(const std::filesystem::path& path) const {
  json j;
  j["variant"] = variant;
  j["seed"] = seed;
  json tracks = json::array();
  for (std::size_t i = 0; i < ids.size(); ++i)
    tracks.push_back({{"id", ids[i]}, {"visual", matrix_json(visual[i])}, {"text", matrix_json(text[i])}});
  j["tracks"] = tracks;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IOError("cannot write " + path.string());
  out << j.dump() << '\n';
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("embedding store not found: " + path.string());
  EmbeddingStore s;
  try {
    json j;
    in >> j;
    s.variant = j.at("variant").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("tracks")) {
      s.ids.push_back(t.at("id").get<std::string>());
      s.visual.push_back(matrix_from_json(t.at("visual")));
      s.text.push_back(matrix_from_json(t.at("text")));
    }
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

EmbeddingStore embed_all(const visual::VisualModel& vmodel, const text::TextModel& tmodel, text::TextMode mode,
                         const data::Dataset& d, const data::DetectionTable& detections,
                         const visual::CropCache& crops, std::uint64_t seed) {
  EmbeddingStore s;
  s.variant = variant_label(vmodel.config().mode, mode);
  s.seed = seed;
  const std::size_t n = d.size();
  s.ids.resize(n);
  s.visual.resize(n);
  s.text.resize(n);
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      const auto& t = d.tracks[i];
      const auto sample = visual::sample_track(vmodel, t, i, detections, crops, derive_seed(seed, i));
      s.ids[i] = t.id;
      s.visual[i] = vmodel.embed(sample.input, sample.crops);
      s.text[i] = text::encode(t.captions, tmodel, mode);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return s;
}

EmbeddingStore embed_all(const std::filesystem::path& visual_ckpt, const std::filesystem::path& text_ckpt,
                         text::TextMode mode, const data::Dataset& d, const data::DetectionTable& detections,
                         const data::CropSource& crops, std::uint64_t seed) {
  const auto vmodel = visual::VisualModel::load(visual_ckpt);
  const auto tmodel = text::TextModel::load(text_ckpt);
  const visual::CropCache cache(crops, d, vmodel.config().crop_width, vmodel.config().crop_height);
  return embed_all(vmodel, tmodel, mode, d, detections, cache, seed);
}

Matrix distance_table(const EmbeddingStore& store, Direction dir, metrics::Metric metric) {
  store.validate();
  const auto& queries = dir == Direction::TextToVisual ? store.text : store.visual;
  const auto& cands = dir == Direction::TextToVisual ? store.visual : store.text;
  const Matrix q = stack(queries), c = stack(cands);
  if (metric == metrics::Metric::CosineMetric) {
    for (const Matrix* m : {&q, &c})
      for (std::size_t r = 0; r < m->rows; ++r)
        if (kernels::dot(m->row(r), m->row(r)) == 0.0) throw ZeroVector("zero embedding under the cosine metric");
  }
  const auto kind = metric == metrics::Metric::CosineMetric ? kernels::Distance::Cosine : kernels::Distance::Euclidean;
  const std::size_t n = store.size();
  Matrix out(n, n);
  kernels::min_set_distance_omp(kind, q.data, n, queries[0].rows, c.data, n, cands[0].rows, q.cols, out.data);
  return out;
}

metrics::RankingTable rank(const EmbeddingStore& store, Direction dir, metrics::Metric metric, RankOrder order) {
  const Matrix dist = distance_table(store, dir, metric);
  const std::size_t n = store.size();
  metrics::RankingTable table;
  table.entries.resize(n);
  std::vector<std::size_t> idx(n);
  for (std::size_t q = 0; q < n; ++q) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const double da = dist(q, a), db = dist(q, b);
      if (da != db) return order == RankOrder::Ascending ? da < db : da > db;
      return store.ids[a] < store.ids[b];
    });
    auto& e = table.entries[q];
    e.query = store.ids[q];
    e.truth = store.ids[q];
    e.candidates.reserve(n);
    for (std::size_t j : idx) e.candidates.push_back(store.ids[j]);
  }
  return table;
}

std::string submission_json(const metrics::RankingTable& table) {
  json j = json::object();  // keys come out sorted
  for (const auto& e : table.entries) j[e.query] = e.candidates;
  return j.dump(1);
}

void write_submission(const metrics::RankingTable& table, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IOError("cannot write " + path.string());
  out << submission_json(table) << '\n';
  if (!out) throw IOError("failed writing " + path.string());
}

metrics::RankingTable load_submission(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("submission not found: " + path.string());
  metrics::RankingTable t;
  try {
    json j;
    in >> j;
    for (const auto& [key, value] : j.items())
      t.entries.push_back({key, key, value.get<std::vector<std::string>>()});
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return t;
}

EvalReport evaluate(const metrics::RankingTable& table) {
  EvalReport r;
  r.mrr = metrics::mrr(table);
  std::map<std::size_t, std::size_t> hist;
  std::size_t hits = 0;
  for (const auto& e : table.entries) {
    const std::size_t k = e.rank_of_truth();
    ++hist[k];
    hits += k <= 10;
  }
  r.top10 = static_cast<double>(hits) / static_cast<double>(table.entries.size());
  r.ranks.assign(hist.begin(), hist.end());
  return r;
}

EvalReport evaluate(const EmbeddingStore& store, Direction dir, metrics::Metric metric, RankOrder order) {
  EvalReport r = evaluate(rank(store, dir, metric, order));
  r.seed = store.seed;
  r.direction = dir;
  r.metric = metric;
  return r;
}

std::string report_json(const EvalReport& r) {
  json j;
  j["mrr"] = r.mrr;
  j["top10"] = r.top10;
  json ranks = json::array();
  for (const auto& [k, c] : r.ranks) ranks.push_back({k, c});
  j["ranks"] = ranks;
  j["seed"] = r.seed;
  j["direction"] = direction_name(r.direction);
  j["metric"] = metrics::metric_name(r.metric);
  return j.dump(2);
}

}  // namespace ayce::retrieval
