#include "ayce/data/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "ayce/core/errors.hpp"
#include "json.hpp"

namespace ayce::data {

using nlohmann::json;

std::size_t Dataset::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < tracks.size(); ++i)
    if (tracks[i].id == id) return i;
  throw SchemaError("unknown track id '" + id + "'");
}

void validate_track(const TrackRecord& t) {
  const std::string where = "track '" + t.id + "'";
  if (t.id.empty()) throw SchemaError("track with empty id");
  if (t.frames.empty()) throw SchemaError(where + " field 'frames': must not be empty");
  if (t.boxes.size() != t.frames.size())
    throw SchemaError(where + " field 'boxes': " + std::to_string(t.boxes.size()) + " boxes for " +
                      std::to_string(t.frames.size()) + " frames");
  for (std::size_t i = 0; i < t.boxes.size(); ++i)
    if (!(t.boxes[i].w > 0) || !(t.boxes[i].h > 0))
      throw SchemaError(where + " field 'boxes'[" + std::to_string(i) + "]: width and height must be positive");
  for (std::size_t j = 0; j < 3; ++j)
    if (t.captions[j].empty()) throw SchemaError(where + " field 'nl'[" + std::to_string(j) + "]: empty caption");
}

void validate_dataset(const Dataset& d) {
  std::set<std::string> seen;
  for (const auto& t : d.tracks) {
    validate_track(t);
    if (!seen.insert(t.id).second) throw SchemaError("duplicate track id '" + t.id + "'");
  }
  if (d.image_width <= 0 || d.image_height <= 0) throw SchemaError("field 'image_size': must be positive");
}

namespace {

std::optional<std::string> opt_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

CaptionAttributes caption_attributes_from_json(const json& j) {
  return {opt_string(j, "color"), opt_string(j, "type"), opt_string(j, "action")};
}

json caption_attributes_to_json(const CaptionAttributes& a) {
  json j = json::object();
  auto put = [&](const char* k, const std::optional<std::string>& v) { j[k] = v ? json(*v) : json(nullptr); };
  put("color", a.color);
  put("type", a.type);
  put("action", a.action);
  return j;
}

TrackRecord track_from_json(const json& j) {
  TrackRecord t;
  if (!j.is_object()) throw SchemaError("track entry is not an object");
  if (!j.contains("id") || !j["id"].is_string()) throw SchemaError("track without a string 'id'");
  t.id = j["id"].get<std::string>();
  const std::string where = "track '" + t.id + "'";
  try {
    for (const auto& f : j.at("frames")) {
      if (f.is_number_integer())
        t.frames.emplace_back(f.get<std::int64_t>());
      else if (f.is_string())
        t.frames.emplace_back(f.get<std::string>());
      else
        throw SchemaError(where + " field 'frames': entries must be integers or strings");
    }
    for (const auto& b : j.at("boxes")) {
      if (!b.is_array() || b.size() != 4) throw SchemaError(where + " field 'boxes': each box needs 4 numbers");
      t.boxes.push_back({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()});
    }
    const auto& nl = j.at("nl");
    if (!nl.is_array()) throw SchemaError(where + " field 'nl': must be an array");
    if (nl.size() != 3)
      throw CaptionCountError(where + " field 'nl': expected 3 captions, found " + std::to_string(nl.size()));
    for (std::size_t k = 0; k < 3; ++k) {
      if (!nl[k].is_string()) throw SchemaError(where + " field 'nl': captions must be strings");
      t.captions[k] = nl[k].get<std::string>();
    }
    if (j.contains("attributes") && !j["attributes"].is_null()) {
      const auto& a = j["attributes"];
      t.attributes = Attributes{a.at("color").get<std::string>(), a.at("type").get<std::string>(),
                                a.at("action").get<std::string>()};
    }
    if (j.contains("nl_attributes") && !j["nl_attributes"].is_null()) {
      const auto& na = j["nl_attributes"];
      if (!na.is_array() || na.size() != 3) throw SchemaError(where + " field 'nl_attributes': expected 3 entries");
      std::array<CaptionAttributes, 3> ca;
      for (std::size_t k = 0; k < 3; ++k) ca[k] = caption_attributes_from_json(na[k]);
      t.caption_attributes = ca;
    }
  } catch (const json::exception& e) {
    throw SchemaError(where + ": " + e.what());
  }
  validate_track(t);
  return t;
}

json track_to_json(const TrackRecord& t) {
  json j;
  j["id"] = t.id;
  json frames = json::array();
  for (const auto& f : t.frames) std::visit([&](const auto& v) { frames.push_back(v); }, f);
  j["frames"] = frames;
  json boxes = json::array();
  for (const auto& b : t.boxes) boxes.push_back({b.x, b.y, b.w, b.h});
  j["boxes"] = boxes;
  j["nl"] = {t.captions[0], t.captions[1], t.captions[2]};
  if (t.attributes) j["attributes"] = {{"color", t.attributes->color}, {"type", t.attributes->type}, {"action", t.attributes->action}};
  if (t.caption_attributes) {
    json na = json::array();
    for (const auto& ca : *t.caption_attributes) na.push_back(caption_attributes_to_json(ca));
    j["nl_attributes"] = na;
  }
  return j;
}

}  // namespace

Dataset parse_dataset(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("dataset is not valid JSON: ") + e.what());
  }
  if (!root.is_object() || !root.contains("tracks") || !root["tracks"].is_array())
    throw SchemaError("dataset must be an object with a 'tracks' array");
  Dataset d;
  if (root.contains("image_size")) {
    const auto& s = root["image_size"];
    if (!s.is_array() || s.size() != 2) throw SchemaError("field 'image_size': expected [width, height]");
    d.image_width = s[0].get<int>();
    d.image_height = s[1].get<int>();
  }
  for (const auto& t : root["tracks"]) d.tracks.push_back(track_from_json(t));
  validate_dataset(d);
  return d;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("dataset not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

std::string dataset_to_json(const Dataset& d) {
  json root;
  root["image_size"] = {d.image_width, d.image_height};
  json tracks = json::array();
  for (const auto& t : d.tracks) tracks.push_back(track_to_json(t));
  root["tracks"] = tracks;
  return root.dump(1);
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IOError("cannot write " + path.string());
  out << dataset_to_json(d) << '\n';
}

void apply_attribute_file(Dataset& d, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("attribute file not found: " + path.string());
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("attribute file is not valid JSON: ") + e.what());
  }
  for (const auto& [id, entries] : root.items()) {
    auto& t = d.tracks[d.index_of(id)];
    if (!entries.is_array() || entries.size() != 3) throw SchemaError("attribute file: track '" + id + "' needs 3 entries");
    std::array<CaptionAttributes, 3> ca;
    for (std::size_t k = 0; k < 3; ++k) ca[k] = caption_attributes_from_json(entries[k]);
    t.caption_attributes = ca;
  }
}

}  // namespace ayce::data
