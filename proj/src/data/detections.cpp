#include "ayce/data/detections.hpp"

#include <fstream>

#include "ayce/core/errors.hpp"
#include "json.hpp"

namespace ayce::data {

using nlohmann::json;

std::vector<ObjectRecord> filter_detections(std::span<const RawDetection> records, const std::set<int>& allowed,
                                            double threshold) {
  std::vector<ObjectRecord> out;
  for (const auto& r : records) {
    if (r.feat.size() != kFeatureWidth)
      throw FeatureWidthError("detection feature vector has width " + std::to_string(r.feat.size()) + ", expected 256");
  }
  for (const auto& r : records) {
    if (r.score < threshold || !allowed.count(r.cls)) continue;
    out.push_back({static_cast<double>(r.cls), r.box, r.feat});
  }
  return out;
}

void DetectionTable::set(const std::string& track_id, std::int64_t frame, std::vector<ObjectRecord> objects) {
  entries_[{track_id, frame}] = std::move(objects);
}

const std::vector<ObjectRecord>& DetectionTable::at(const std::string& track_id, std::int64_t frame) const {
  static const std::vector<ObjectRecord> kEmpty;
  auto it = entries_.find({track_id, frame});
  return it == entries_.end() ? kEmpty : it->second;
}

DetectionTable load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("detections not found: " + path.string());
  DetectionTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      std::vector<ObjectRecord> objs;
      for (const auto& o : j.at("objects")) {
        ObjectRecord r;
        r.cls = o.at("cls").get<double>();
        const auto& b = o.at("box");
        if (b.size() != 4) throw SchemaError(where + ": box needs 4 values");
        for (std::size_t k = 0; k < 4; ++k) {
          r.box[k] = b[k].get<double>();
          if (r.box[k] < 0.0 || r.box[k] > 1.0) throw SchemaError(where + ": box coordinates must lie in [0,1]");
        }
        r.feat = o.at("feat").get<std::vector<double>>();
        if (r.feat.size() != kFeatureWidth)
          throw FeatureWidthError(where + ": feature width " + std::to_string(r.feat.size()) + ", expected 256");
        objs.push_back(std::move(r));
      }
      table.set(j.at("track_id").get<std::string>(), j.at("frame").get<std::int64_t>(), std::move(objs));
    } catch (const json::exception& e) {
      throw SchemaError(where + ": " + e.what());
    }
  }
  return table;
}

void save_detections(const DetectionTable& table, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IOError("cannot write " + path.string());
  for (const auto& [key, objs] : table.entries()) {
    json j;
    j["track_id"] = key.first;
    j["frame"] = key.second;
    json arr = json::array();
    for (const auto& o : objs) arr.push_back({{"cls", o.cls}, {"box", o.box}, {"feat", o.feat}});
    j["objects"] = arr;
    out << j.dump() << '\n';
  }
}

}  // namespace ayce::data
