#include "ayce/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ayce/core/errors.hpp"
#include "ayce/core/rng.hpp"
#include "json.hpp"

namespace ayce::data {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

void check_noise(const AttributeNoise& n, const char* what) {
  auto ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!ok(n.swap) || !ok(n.drop))
    throw SpecError(std::string(what) + " noise probabilities must lie in [0,1]");
  if (n.drop >= 1.0) throw SpecError(std::string(what) + " drop probability must be below 1");
}

json noise_to_json(const AttributeNoise& n) { return {{"swap", n.swap}, {"drop", n.drop}}; }

AttributeNoise noise_from_json(const json& j, AttributeNoise fallback) {
  if (j.contains("swap")) fallback.swap = j["swap"].get<double>();
  if (j.contains("drop")) fallback.drop = j["drop"].get<double>();
  return fallback;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }

enum Behavior { Straight, Left, Right, Stop, LaneLeft, LaneRight, Slow, Fast, UTurn, Reverse };

Behavior behavior_of(std::size_t action_index) { return static_cast<Behavior>(action_index % 10); }

// Heading offset and speed factor at normalised time u in [0, 1].
double heading_offset(Behavior b, double u) {
  switch (b) {
    case Left: return -0.5 * kPi * smoothstep(u);
    case Right: return 0.5 * kPi * smoothstep(u);
    case LaneLeft: return -0.45 * std::sin(kPi * u);
    case LaneRight: return 0.45 * std::sin(kPi * u);
    case UTurn: return kPi * smoothstep(u);
    default: return 0.0;
  }
}

double speed_factor(Behavior b, double u) {
  switch (b) {
    case Stop: return u < 0.6 ? 1.6 * (1.0 - u / 0.6) : 0.0;
    case Slow: return 1.5 - 1.1 * u;
    case Fast: return 0.4 + 1.1 * u;
    case Reverse: return 0.5;
    default: return 1.0;
  }
}

struct TypeShape {
  double length;  // fraction of min(crop w, h)
  double ratio;   // width / length
  double box_w, box_h;
};

TypeShape type_shape(std::size_t type_index) {
  static const TypeShape shapes[] = {
      {0.80, 0.46, 140, 90},   // sedan
      {0.78, 0.58, 150, 110},  // suv
      {0.92, 0.46, 170, 100},  // pickup truck
      {0.80, 0.66, 160, 120},  // van
      {1.00, 0.36, 260, 150},  // bus
      {0.62, 0.58, 120, 85},   // hatchback
  };
  return shapes[type_index % 6];
}

std::array<double, 3> color_rgb(const std::string& name) {
  static const std::pair<const char*, std::array<double, 3>> table[] = {
      {"red", {200, 30, 30}},     {"blue", {30, 60, 210}},    {"white", {240, 240, 240}},
      {"black", {20, 20, 20}},    {"silver", {185, 185, 200}}, {"green", {40, 170, 60}},
      {"yellow", {235, 210, 40}}, {"gray", {115, 115, 115}},  {"grey", {115, 115, 115}},
      {"orange", {240, 130, 20}}, {"brown", {120, 70, 30}},   {"purple", {120, 40, 160}},
  };
  for (const auto& [n, rgb] : table)
    if (name == n) return rgb;
  const std::uint64_t h = fnv1a(name);
  return {double(h & 0xff), double((h >> 8) & 0xff), double((h >> 16) & 0xff)};
}

std::size_t index_in(const std::vector<std::string>& values, const std::string& v) {
  auto it = std::find(values.begin(), values.end(), v);
  return it == values.end() ? 0 : static_cast<std::size_t>(it - values.begin());
}

// Per-caption observed values of one attribute: nullopt when dropped.
std::array<std::optional<std::size_t>, 3> corrupt(std::size_t truth, std::size_t k, const AttributeNoise& noise,
                                                  Rng& rng) {
  std::array<bool, 3> dropped{};
  do {
    for (auto& d : dropped) d = uniform01(rng) < noise.drop;
  } while (dropped[0] && dropped[1] && dropped[2]);
  std::array<std::optional<std::size_t>, 3> out;
  for (std::size_t j = 0; j < 3; ++j) {
    std::size_t v = truth;
    if (k > 1 && uniform01(rng) < noise.swap) {
      v = uniform_index(rng, k - 1);
      if (v >= truth) ++v;
    }
    if (!dropped[j]) out[j] = v;
  }
  return out;
}

std::string render_caption(const std::string& tmpl, const std::optional<std::string>& color,
                           const std::optional<std::string>& type, const std::optional<std::string>& action) {
  std::string s = tmpl;
  auto replace = [&](const std::string& key, const std::string& value) {
    for (std::size_t p; (p = s.find(key)) != std::string::npos;) s.replace(p, key.size(), value);
  };
  replace("{color}", color.value_or(""));
  replace("{type}", type.value_or("vehicle"));
  replace("{action}", action.value_or("is on the road"));
  std::istringstream in(s);
  std::string out;
  for (std::string w; in >> w;) out += (out.empty() ? "" : " ") + w;
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::vector<double> class_prototype(int cls) {
  Rng rng(derive_seed(0x70726f746fULL, static_cast<std::uint64_t>(cls)));
  std::normal_distribution<double> n(0.0, 0.6);
  std::vector<double> p(kFeatureWidth);
  for (auto& v : p) v = std::abs(n(rng));
  return p;
}

std::vector<double> noisy_feature(const std::vector<double>& proto, Rng& rng) {
  std::normal_distribution<double> n(0.0, 0.1);
  std::vector<double> f(proto.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::round((proto[i] + n(rng)) * 1e4) / 1e4;
  return f;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

TrackRecord make_track(const SyntheticSpec& spec, std::uint64_t seed, std::size_t i) {
  Rng rng(derive_seed(seed, 1, i));
  TrackRecord t;
  char id[32];
  std::snprintf(id, sizeof id, "t%05zu", i);
  t.id = id;

  const std::size_t ci = uniform_index(rng, spec.colors.size());
  const std::size_t ti = uniform_index(rng, spec.types.size());
  const std::size_t ai = uniform_index(rng, spec.actions.size());
  t.attributes = Attributes{spec.colors[ci], spec.types[ti], spec.actions[ai]};

  std::normal_distribution<double> lognormal(spec.frames_log_mean, spec.frames_log_sigma);
  const int n = std::clamp(static_cast<int>(std::lround(std::exp(lognormal(rng)))), spec.frames_min, spec.frames_max);

  // Trajectory in pixel space, then shifted so every box stays in the frame.
  const Behavior b = behavior_of(ai);
  const TypeShape shape = type_shape(ti);
  const double scale = uniform(rng, 0.85, 1.15);
  const double bw = shape.box_w * scale, bh = shape.box_h * scale;
  const double theta0 = uniform(rng, 0.0, 2.0 * kPi);
  const double travel = uniform(rng, 350.0, 600.0);
  const double step = n > 1 ? travel / (n - 1) : 0.0;
  std::vector<std::array<double, 2>> path(static_cast<std::size_t>(n));
  for (int f = 1; f < n; ++f) {
    const double u = static_cast<double>(f - 1) / std::max(1, n - 1);
    double dir = theta0 + heading_offset(b, u);
    if (b == Reverse) dir += kPi;
    const double len = step * speed_factor(b, u);
    path[f] = {path[f - 1][0] + len * std::cos(dir), path[f - 1][1] + len * std::sin(dir)};
  }
  double lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
  for (const auto& p : path) {
    lo_x = std::min(lo_x, p[0]);
    hi_x = std::max(hi_x, p[0]);
    lo_y = std::min(lo_y, p[1]);
    hi_y = std::max(hi_y, p[1]);
  }
  auto place_axis = [&](double lo, double hi, double size, double limit) {
    const double room = limit - size - (hi - lo);
    return (room > 0 ? uniform(rng, 0.0, room) : room / 2) - lo;
  };
  const double ox = place_axis(lo_x, hi_x, bw, spec.image_width);
  const double oy = place_axis(lo_y, hi_y, bh, spec.image_height);
  for (int f = 0; f < n; ++f) {
    t.frames.emplace_back(static_cast<std::int64_t>(f));
    const double x = std::clamp(path[f][0] + ox, 0.0, spec.image_width - bw);
    const double y = std::clamp(path[f][1] + oy, 0.0, spec.image_height - bh);
    t.boxes.push_back({round2(x), round2(y), round2(bw), round2(bh)});
  }

  const auto colors = corrupt(ci, spec.colors.size(), spec.color_noise, rng);
  const auto types = corrupt(ti, spec.types.size(), spec.type_noise, rng);
  const auto actions = corrupt(ai, spec.actions.size(), spec.action_noise, rng);
  std::array<CaptionAttributes, 3> ca;
  for (std::size_t j = 0; j < 3; ++j) {
    if (colors[j]) ca[j].color = spec.colors[*colors[j]];
    if (types[j]) ca[j].type = spec.types[*types[j]];
    if (actions[j]) ca[j].action = spec.actions[*actions[j]];
    const auto& tmpl = spec.templates[uniform_index(rng, spec.templates.size())];
    t.captions[j] = render_caption(tmpl, ca[j].color, ca[j].type, ca[j].action);
  }
  t.caption_attributes = ca;
  return t;
}

std::vector<ObjectRecord> make_detections(const SyntheticSpec& spec, std::uint64_t seed, std::size_t i,
                                          const TrackRecord& t, std::size_t pos, const DetectorClasses& classes) {
  Rng rng(derive_seed(seed, 2, i, pos));
  std::poisson_distribution<int> count(spec.distractor_mean);
  const int n = std::min(count(rng), spec.distractor_max);
  std::vector<RawDetection> raw;
  for (int k = 0; k < n; ++k) {
    RawDetection d;
    d.cls = static_cast<int>(uniform_index(rng, 16));
    d.score = uniform(rng, 0.5, 1.0);
    const double w = uniform(rng, 0.02, 0.2), h = uniform(rng, 0.02, 0.2);
    d.box = {std::round(uniform(rng, 0.0, 1.0 - w) * 1e4) / 1e4, std::round(uniform(rng, 0.0, 1.0 - h) * 1e4) / 1e4,
             std::round(w * 1e4) / 1e4, std::round(h * 1e4) / 1e4};
    d.feat = noisy_feature(class_prototype(d.cls), rng);
    raw.push_back(std::move(d));
  }
  if (uniform01(rng) < spec.self_detection_prob) {
    // The detector also fires on the tracked vehicle itself.
    const Box& b = t.boxes[pos];
    RawDetection d;
    d.cls = 2;
    d.score = uniform(rng, 0.9, 1.0);
    const double W = spec.image_width, H = spec.image_height;
    auto jitter = [&](double v) { return std::clamp(std::round((v + uniform(rng, -0.005, 0.005)) * 1e4) / 1e4, 0.0, 1.0); };
    d.box = {jitter(b.x / W), jitter(b.y / H), 0, 0};
    d.box[2] = std::min(jitter(b.w / W), 1.0 - d.box[0]);
    d.box[3] = std::min(jitter(b.h / H), 1.0 - d.box[1]);
    d.feat = noisy_feature(class_prototype(d.cls), rng);
    raw.insert(raw.begin() + static_cast<std::ptrdiff_t>(uniform_index(rng, raw.size() + 1)), std::move(d));
  }
  return filter_detections(raw, classes.allowed);
}

// Heading of the vehicle body at frame `pos`, recovered from box motion.
double heading_at(const TrackRecord& t, std::size_t pos, bool reversing) {
  auto motion = [&](std::size_t a) -> std::optional<double> {
    const Box &p = t.boxes[a], &q = t.boxes[a + 1];
    const double dx = (q.x + q.w / 2) - (p.x + p.w / 2), dy = (q.y + q.h / 2) - (p.y + p.h / 2);
    if (std::hypot(dx, dy) < 0.5) return std::nullopt;
    return std::atan2(dy, dx);
  };
  const std::size_t n = t.boxes.size();
  if (n < 2) return 0.0;
  std::optional<double> h;
  for (std::size_t a = std::min(pos, n - 2) + 1; a-- > 0 && !h;) h = motion(a);
  for (std::size_t a = std::min(pos, n - 2); a + 1 < n && !h; ++a) h = motion(a);
  const double heading = h.value_or(0.0);
  return reversing ? heading + kPi : heading;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_tracks < 1) throw SpecError("n_tracks must be at least 1");
  if (frames_min < 1 || frames_max < frames_min) throw SpecError("frame range must satisfy 1 <= min <= max");
  if (!std::isfinite(frames_log_mean) || !(frames_log_sigma >= 0)) throw SpecError("invalid frame-length distribution");
  if (colors.empty() || types.empty() || actions.empty()) throw SpecError("attribute vocabularies must be non-empty");
  if (templates.empty()) throw SpecError("at least one caption template is required");
  check_noise(type_noise, "type");
  check_noise(color_noise, "color");
  check_noise(action_noise, "action");
  if (crop_width < 8 || crop_height < 8) throw SpecError("crop size must be at least 8x8");
  if (image_width < 1 || image_height < 1) throw SpecError("image size must be positive");
  if (!(distractor_mean >= 0) || distractor_max < 0) throw SpecError("distractor distribution must be non-negative");
  if (!(self_detection_prob >= 0 && self_detection_prob <= 1)) throw SpecError("self_detection_prob must lie in [0,1]");
}

double expected_distinct(std::size_t k, const AttributeNoise& noise) {
  if (k <= 1) return 1.0;
  const double d = noise.drop, s = noise.swap;
  const double other = s / static_cast<double>(k - 1);
  const double none_kept = d * d * d;
  double total = 0.0;
  for (int j = 1; j <= 3; ++j) {
    const double binom = j == 2 ? 3.0 : (j == 1 ? 3.0 : 1.0);
    const double p = binom * std::pow(1 - d, j) * std::pow(d, 3 - j) / (1 - none_kept);
    const double distinct = (1 - std::pow(s, j)) + static_cast<double>(k - 1) * (1 - std::pow(1 - other, j));
    total += p * distinct;
  }
  return total;
}

double calibrate_swap(std::size_t k, double drop, double target) {
  const double hi_s = k > 1 ? static_cast<double>(k - 1) / static_cast<double>(k) : 0.0;
  const double lo_v = expected_distinct(k, {0.0, drop}), hi_v = expected_distinct(k, {hi_s, drop});
  if (target < lo_v - 1e-12 || target > hi_v + 1e-12)
    throw SpecError("distinct-value target " + std::to_string(target) + " unreachable with " + std::to_string(k) +
                    " values");
  double lo = 0.0, hi = hi_s;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected_distinct(k, {mid, drop}) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

SyntheticSpec SyntheticSpec::paper_calibrated() {
  SyntheticSpec s;
  s.n_tracks = 2498;
  s.frames_log_mean = std::log(81.0) - 0.5;
  s.frames_log_sigma = 1.0;
  s.frames_min = 1;
  s.frames_max = 3620;
  s.type_noise.drop = 0.0076;
  s.color_noise.drop = 0.0468;
  s.action_noise.drop = 0.0153;
  s.type_noise.swap = calibrate_swap(s.types.size(), s.type_noise.drop, 2.07);
  s.color_noise.swap = calibrate_swap(s.colors.size(), s.color_noise.drop, 1.85);
  s.action_noise.swap = calibrate_swap(s.actions.size(), s.action_noise.drop, 2.63);
  return s;
}

std::string SyntheticSpec::to_json() const {
  json j;
  j["n_tracks"] = n_tracks;
  j["frames"] = {{"log_mean", frames_log_mean}, {"log_sigma", frames_log_sigma}, {"min", frames_min}, {"max", frames_max}};
  j["colors"] = colors;
  j["types"] = types;
  j["actions"] = actions;
  j["templates"] = templates;
  j["noise"] = {{"type", noise_to_json(type_noise)}, {"color", noise_to_json(color_noise)},
                {"action", noise_to_json(action_noise)}};
  j["crop_size"] = {crop_width, crop_height};
  j["image_size"] = {image_width, image_height};
  j["distractors"] = {{"mean", distractor_mean}, {"max", distractor_max}, {"self_detection_prob", self_detection_prob}};
  return j.dump(2);
}

SyntheticSpec SyntheticSpec::from_json(const std::string& text) {
  SyntheticSpec s;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw SpecError("spec must be a JSON object");
    if (j.contains("n_tracks")) {
      const auto n = j["n_tracks"].get<long long>();
      if (n < 1) throw SpecError("n_tracks must be at least 1");
      s.n_tracks = static_cast<std::size_t>(n);
    }
    if (j.contains("frames")) {
      const auto& f = j["frames"];
      s.frames_log_mean = f.value("log_mean", s.frames_log_mean);
      s.frames_log_sigma = f.value("log_sigma", s.frames_log_sigma);
      s.frames_min = f.value("min", s.frames_min);
      s.frames_max = f.value("max", s.frames_max);
    }
    if (j.contains("colors")) s.colors = j["colors"].get<std::vector<std::string>>();
    if (j.contains("types")) s.types = j["types"].get<std::vector<std::string>>();
    if (j.contains("actions")) s.actions = j["actions"].get<std::vector<std::string>>();
    if (j.contains("templates")) s.templates = j["templates"].get<std::vector<std::string>>();
    if (j.contains("noise")) {
      const auto& n = j["noise"];
      if (n.contains("type")) s.type_noise = noise_from_json(n["type"], s.type_noise);
      if (n.contains("color")) s.color_noise = noise_from_json(n["color"], s.color_noise);
      if (n.contains("action")) s.action_noise = noise_from_json(n["action"], s.action_noise);
    }
    if (j.contains("crop_size")) {
      s.crop_width = j["crop_size"].at(0).get<int>();
      s.crop_height = j["crop_size"].at(1).get<int>();
    }
    if (j.contains("image_size")) {
      s.image_width = j["image_size"].at(0).get<int>();
      s.image_height = j["image_size"].at(1).get<int>();
    }
    if (j.contains("distractors")) {
      const auto& d = j["distractors"];
      s.distractor_mean = d.value("mean", s.distractor_mean);
      s.distractor_max = d.value("max", s.distractor_max);
      s.self_detection_prob = d.value("self_detection_prob", s.self_detection_prob);
    }
  } catch (const json::exception& e) {
    throw SpecError(std::string("invalid spec: ") + e.what());
  }
  s.validate();
  return s;
}

SyntheticSpec SyntheticSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("spec not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed, bool with_detections) {
  spec.validate();
  SyntheticCorpus c;
  c.dataset.image_width = spec.image_width;
  c.dataset.image_height = spec.image_height;
  c.dataset.tracks.reserve(spec.n_tracks);
  const DetectorClasses classes;
  for (std::size_t i = 0; i < spec.n_tracks; ++i) {
    c.dataset.tracks.push_back(make_track(spec, seed, i));
    if (!with_detections) continue;
    const auto& t = c.dataset.tracks.back();
    for (std::size_t pos = 0; pos < t.frame_count(); ++pos)
      c.detections.set(t.id, static_cast<std::int64_t>(pos), make_detections(spec, seed, i, t, pos, classes));
  }
  return c;
}

Image render_crop(const SyntheticSpec& spec, const TrackRecord& track, std::size_t frame_pos) {
  if (!track.attributes) throw SpecError("track '" + track.id + "' has no attributes to render");
  if (frame_pos >= track.frame_count()) throw ShapeError("frame position out of range for track '" + track.id + "'");
  const auto& attr = *track.attributes;
  const std::size_t ti = index_in(spec.types, attr.type);
  const Behavior b = behavior_of(index_in(spec.actions, attr.action));
  const TypeShape shape = type_shape(ti);
  const auto rgb = color_rgb(attr.color);

  const int cw = spec.crop_width, ch = spec.crop_height;
  const double heading = heading_at(track, frame_pos, b == Reverse);
  const double c = std::cos(heading), s = std::sin(heading);
  const double len = shape.length * 0.85 * std::min(cw, ch);
  const double wid = len * shape.ratio;

  Image img(cw, ch);
  const std::uint64_t base = derive_seed(fnv1a(track.id), frame_pos);
  for (int y = 0; y < ch; ++y) {
    for (int x = 0; x < cw; ++x) {
      const std::uint64_t h = mix64(base ^ (static_cast<std::uint64_t>(y) * cw + x));
      const double n0 = static_cast<double>(h & 0xffff) / 65535.0 - 0.5;
      const double n1 = static_cast<double>((h >> 16) & 0xffff) / 65535.0 - 0.5;
      const double dx = x + 0.5 - cw / 2.0, dy = y + 0.5 - ch / 2.0;
      const double a = dx * c + dy * s;   // along the heading
      const double l = -dx * s + dy * c;  // across
      std::array<double, 3> px;
      if (std::abs(a) <= len / 2 && std::abs(l) <= wid / 2) {
        double shade = 1.0;
        const double fa = a / len;
        if (fa > 0.14 && fa < 0.30) shade = 0.35;                        // windshield
        if (ti % 6 == 2 && fa < -0.05) shade = 0.65;                     // open bed
        if (ti % 6 == 4 && std::abs(l) > 0.3 * wid && std::fmod(fa + 1.0, 0.16) < 0.07) shade = 0.5;  // windows
        for (int k = 0; k < 3; ++k) px[k] = rgb[k] * shade + 12.0 * shade + 10.0 * n0;
      } else {
        const double tex = 14.0 * n0 + 8.0 * n1;
        px = {70 + tex, 88 + tex, 72 + tex};
      }
      auto* out = img.px(x, y);
      for (int k = 0; k < 3; ++k) out[k] = static_cast<std::uint8_t>(std::clamp(std::lround(px[k]), 0L, 255L));
    }
  }
  return img;
}

void write_corpus(const SyntheticSpec& spec, const SyntheticCorpus& corpus, const std::filesystem::path& out_dir,
                  bool with_crops) {
  std::filesystem::create_directories(out_dir);
  save_dataset(corpus.dataset, out_dir / "dataset.json");
  save_detections(corpus.detections, out_dir / "detections.jsonl");
  {
    std::ofstream out(out_dir / "spec.json");
    if (!out) throw IOError("cannot write " + (out_dir / "spec.json").string());
    out << spec.to_json() << '\n';
  }
  if (!with_crops) return;
  for (const auto& t : corpus.dataset.tracks)
    for (std::size_t pos = 0; pos < t.frame_count(); ++pos)
      write_png(render_crop(spec, t, pos), out_dir / "crops" / t.id / (std::to_string(pos) + ".png"));
}

}  // namespace ayce::data
