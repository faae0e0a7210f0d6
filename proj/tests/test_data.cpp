#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ayce/core/errors.hpp"
#include "ayce/data/crop_source.hpp"
#include "ayce/data/dataset.hpp"
#include "ayce/data/detections.hpp"
#include "ayce/data/image.hpp"
#include "ayce/data/sampling.hpp"
#include "ayce/data/stats.hpp"
#include "ayce/data/synthetic.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace ayce;
using namespace ayce::data;
using ayce::testing::TempDir;

namespace {

TrackRecord make_track(const std::string& id, std::size_t frames) {
  TrackRecord t;
  t.id = id;
  for (std::size_t i = 0; i < frames; ++i) {
    t.frames.emplace_back(static_cast<std::int64_t>(i));
    t.boxes.push_back({10.0 + i, 20.0, 50.0, 40.0});
  }
  t.captions = {"A red sedan goes straight.", "The red car drives on.", "Red sedan, straight."};
  return t;
}

double chi_square_p(const std::vector<double>& observed, double expected) {
  double stat = 0;
  for (double o : observed) stat += (o - expected) * (o - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace

TEST(Dataset, MinimalFileLoads) {
  TempDir dir("ds");
  std::ofstream(dir / "d.json") << R"({"tracks":[{"id":"a","frames":[0,1,2,3,4],
      "boxes":[[0,0,5,5],[0,0,5,5],[0,0,5,5],[0,0,5,5],[0,0,5,5]],"nl":["x y","y z","z w"]}]})";
  const auto d = load_dataset(dir / "d.json");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.tracks[0].frame_count(), 5u);
  EXPECT_EQ(d.image_width, 1920);
}

TEST(Dataset, TwoCaptionsIsCaptionCountError) {
  const std::string text = R"({"tracks":[{"id":"a","frames":[0],"boxes":[[0,0,5,5]],"nl":["x","y"]}]})";
  EXPECT_THROW(parse_dataset(text), CaptionCountError);
}

TEST(Dataset, SchemaErrorsNameTrackAndField) {
  const std::string text = R"({"tracks":[{"id":"bad1","frames":[0,1],"boxes":[[0,0,5,5]],"nl":["x","y","z"]}]})";
  try {
    parse_dataset(text);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bad1"), std::string::npos);
    EXPECT_NE(msg.find("boxes"), std::string::npos);
  }
  EXPECT_THROW(parse_dataset(R"({"tracks":[{"id":"a","frames":[],"boxes":[],"nl":["x","y","z"]}]})"), SchemaError);
  EXPECT_THROW(parse_dataset("not json"), SchemaError);
  EXPECT_THROW(load_dataset("/nonexistent/d.json"), MissingFile);
}

TEST(Dataset, SaveLoadRoundTrip) {
  const auto corpus = generate_synthetic(SyntheticSpec{}, 3);
  TempDir dir("rt");
  save_dataset(corpus.dataset, dir / "d.json");
  const auto back = load_dataset(dir / "d.json");
  EXPECT_EQ(back, corpus.dataset);
  save_dataset(back, dir / "d2.json");
  std::ifstream a(dir / "d.json"), b(dir / "d2.json");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());

  Dataset d;
  d.tracks = {make_track("p", 2)};
  d.tracks[0].frames[1] = std::string("frames/000002.png");
  EXPECT_EQ(parse_dataset(dataset_to_json(d)), d);
}

TEST(Dataset, AttributeFileAttachesPerCaptionLabels) {
  Dataset d;
  d.tracks = {make_track("a", 3)};
  TempDir dir("attr");
  std::ofstream(dir / "attr.json") << R"({"a":[{"color":"Red","type":"sedan"},{"color":"red"},{"color":"blue"}]})";
  apply_attribute_file(d, dir / "attr.json");
  ASSERT_TRUE(d.tracks[0].caption_attributes);
  EXPECT_EQ((*d.tracks[0].caption_attributes)[0].color, "Red");
  EXPECT_FALSE((*d.tracks[0].caption_attributes)[1].type);
  const auto s = compute_stats(d);
  ASSERT_TRUE(s.distinct);
  EXPECT_EQ(s.distinct->colors, 2.0);  // case-insensitive: red, blue
  EXPECT_EQ(s.distinct->types, 1.0);
  std::ofstream(dir / "bad.json") << R"({"zzz":[{},{},{}]})";
  EXPECT_THROW(apply_attribute_file(d, dir / "bad.json"), SchemaError);
}

TEST(Stats, FrameExtremes) {
  Dataset d;
  d.tracks = {make_track("a", 1), make_track("b", 3620)};
  const auto s = compute_stats(d);
  EXPECT_EQ(s.n_tracks, 2u);
  EXPECT_EQ(s.frames.min, 1.0);
  EXPECT_EQ(s.frames.max, 3620.0);
  EXPECT_EQ(s.frames.mean, 1810.5);
  EXPECT_FALSE(s.distinct);

  Dataset one;
  one.tracks = {make_track("a", 7)};
  const auto s1 = compute_stats(one);
  EXPECT_EQ(s1.frames.mean, 7.0);
  EXPECT_EQ(s1.frames.min, 7.0);
  EXPECT_EQ(s1.frames.max, 7.0);
  EXPECT_THROW(compute_stats(Dataset{}), EmptyDataset);
}

TEST(Stats, MatchesIndependentScanOfFile) {
  const auto corpus = generate_synthetic(SyntheticSpec{}, 9);
  TempDir dir("scan");
  save_dataset(corpus.dataset, dir / "d.json");
  std::ifstream in(dir / "d.json");
  const auto root = nlohmann::json::parse(in);
  double frames = 0, fmin = 1e18, fmax = 0, words = 0, nwords = 0;
  for (const auto& t : root["tracks"]) {
    const double f = static_cast<double>(t["frames"].size());
    frames += f;
    fmin = std::min(fmin, f);
    fmax = std::max(fmax, f);
    for (const auto& s : t["nl"]) {
      std::istringstream ws(s.get<std::string>());
      std::string w;
      double c = 0;
      while (ws >> w) ++c;
      words += c;
      ++nwords;
    }
  }
  const auto s = compute_stats(corpus.dataset);
  const double n = static_cast<double>(root["tracks"].size());
  EXPECT_NEAR(s.frames.mean, frames / n, 1e-12);
  EXPECT_EQ(s.frames.min, fmin);
  EXPECT_EQ(s.frames.max, fmax);
  EXPECT_NEAR(s.caption_words.mean, words / nwords, 1e-12);
  EXPECT_EQ(word_count("  A red  car. "), 3u);
}

TEST(Sampling, ShortTrackKeepsAllFrames) {
  Rng rng(1);
  const auto s = subsample_frames(50, 80, rng);
  ASSERT_EQ(s.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(s[i], i);
}

TEST(Sampling, LongTrackCappedSortedDistinct) {
  Rng rng(2);
  const auto s = subsample_frames(3620, kDefaultFrameCap, rng);
  ASSERT_EQ(s.size(), 80u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(std::adjacent_find(s.begin(), s.end()), s.end());
  EXPECT_LT(s.back(), 3620u);
}

TEST(Sampling, SelectionFrequencyIsUniform) {
  Rng rng(3);
  const std::size_t n = 200, cap = 80, draws = 100000;
  std::vector<double> counts(n, 0.0);
  for (std::size_t i = 0; i < draws; ++i)
    for (auto k : subsample_frames(n, cap, rng)) counts[k] += 1.0;
  EXPECT_GT(chi_square_p(counts, static_cast<double>(draws * cap) / n), 0.01);
}

TEST(Detections, ThresholdAndClassFilter) {
  std::vector<RawDetection> raw;
  for (double s : {0.9, 0.85, 0.5}) raw.push_back({s, 2, {0.1, 0.1, 0.2, 0.2}, std::vector<double>(256, s)});
  const auto kept = filter_detections(raw, DetectorClasses{}.allowed);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].feat[0], 0.9);
  EXPECT_EQ(kept[1].feat[0], 0.85);

  for (auto& r : raw) r.score = 0.84;
  EXPECT_TRUE(filter_detections(raw, DetectorClasses{}.allowed).empty());

  raw[0].feat.resize(10);
  raw[0].score = 0.99;
  EXPECT_THROW(filter_detections(raw, DetectorClasses{}.allowed), FeatureWidthError);
}

TEST(Detections, MatchesNaiveFilterOnRandomInput) {
  Rng rng(4);
  const std::set<int> allowed = DetectorClasses{}.allowed;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<RawDetection> raw(20);
    for (auto& r : raw) {
      r.score = uniform01(rng);
      r.cls = static_cast<int>(uniform_index(rng, 16));
      r.feat.assign(256, uniform01(rng));
    }
    std::vector<double> expect;
    for (const auto& r : raw) {
      bool ok = false;
      for (int c : allowed) ok = ok || c == r.cls;
      if (ok && r.score >= 0.85) expect.push_back(r.feat[0]);
    }
    const auto got = filter_detections(raw, allowed);
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i].feat[0], expect[i]);
  }
  EXPECT_EQ(DetectorClasses{}.sentinel(), 12);
}

TEST(Detections, JsonlRoundTrip) {
  const auto corpus = generate_synthetic(SyntheticSpec{}, 5);
  ASSERT_GT(corpus.detections.size(), 0u);
  TempDir dir("det");
  save_detections(corpus.detections, dir / "d.jsonl");
  EXPECT_EQ(load_detections(dir / "d.jsonl"), corpus.detections);
  std::ofstream(dir / "bad.jsonl") << R"({"track_id":"a","frame":0,"objects":[{"cls":1,"box":[0,0,2,0.1],"feat":[]}]})"
                                   << "\n";
  EXPECT_THROW(load_detections(dir / "bad.jsonl"), SchemaError);
}

TEST(Synthetic, Deterministic) {
  const auto a = generate_synthetic(SyntheticSpec{}, 42);
  const auto b = generate_synthetic(SyntheticSpec{}, 42);
  EXPECT_EQ(a.dataset, b.dataset);
  EXPECT_EQ(a.detections, b.detections);
  const auto c = generate_synthetic(SyntheticSpec{}, 43);
  EXPECT_NE(a.dataset, c.dataset);
  EXPECT_EQ(generate_synthetic(SyntheticSpec{}, 42, false).dataset, a.dataset);
  EXPECT_EQ(render_crop(SyntheticSpec{}, a.dataset.tracks[0], 1), render_crop(SyntheticSpec{}, b.dataset.tracks[0], 1));
}

TEST(Synthetic, NoNoiseMeansConsistentTriplets) {
  SyntheticSpec spec;
  spec.n_tracks = 100;
  const auto d = generate_synthetic(spec, 7, false).dataset;
  const auto s = compute_stats(d);
  ASSERT_TRUE(s.distinct);
  EXPECT_EQ(s.distinct->types, 1.0);
  EXPECT_EQ(s.distinct->colors, 1.0);
  EXPECT_EQ(s.distinct->actions, 1.0);
  for (const auto& t : d.tracks) {
    ASSERT_TRUE(t.attributes);
    for (auto c : t.captions) {
      std::transform(c.begin(), c.end(), c.begin(), [](unsigned char ch) { return std::tolower(ch); });
      EXPECT_NE(c.find(t.attributes->color), std::string::npos) << c;
    }
  }
}

TEST(Synthetic, ExpectedDistinctMatchesSimulation) {
  // Independent simulation of the per-caption corruption process.
  Rng rng(8);
  for (auto [k, noise] : {std::pair<std::size_t, AttributeNoise>{6, {0.3, 0.05}}, {8, {0.2, 0.0}}, {10, {0.6, 0.02}}}) {
    const int trials = 200000;
    double total = 0;
    for (int t = 0; t < trials; ++t) {
      std::array<std::size_t, 3> value{};
      for (auto& v : value) {
        v = 0;
        if (uniform01(rng) < noise.swap) v = 1 + uniform_index(rng, k - 1);
      }
      std::array<bool, 3> dropped{};
      do {
        for (auto& d : dropped) d = uniform01(rng) < noise.drop;
      } while (dropped[0] && dropped[1] && dropped[2]);
      std::set<std::size_t> seen;
      for (int i = 0; i < 3; ++i)
        if (!dropped[i]) seen.insert(value[i]);
      total += static_cast<double>(seen.size());
    }
    EXPECT_NEAR(expected_distinct(k, noise), total / trials, 0.01) << "k=" << k;
  }
}

TEST(Synthetic, CalibrateSwapInvertsExpectedDistinct) {
  for (double target : {1.2, 1.85, 2.07}) {
    const double s = calibrate_swap(6, 0.02, target);
    EXPECT_NEAR(expected_distinct(6, {s, 0.02}), target, 1e-9);
  }
  EXPECT_THROW(calibrate_swap(2, 0.0, 2.9), SpecError);
}

TEST(Synthetic, SpecValidationAndJson) {
  SyntheticSpec bad;
  bad.n_tracks = 0;
  EXPECT_THROW(bad.validate(), SpecError);
  SyntheticSpec noisy;
  noisy.color_noise.swap = 1.5;
  EXPECT_THROW(generate_synthetic(noisy, 1), SpecError);
  const auto p = SyntheticSpec::paper_calibrated();
  const auto back = SyntheticSpec::from_json(p.to_json());
  EXPECT_EQ(back.to_json(), p.to_json());
  EXPECT_EQ(back.n_tracks, p.n_tracks);
}

TEST(Synthetic, WrittenCorpusIsReadable) {
  SyntheticSpec spec;
  spec.n_tracks = 3;
  const auto corpus = generate_synthetic(spec, 11);
  TempDir dir("corpus");
  write_corpus(spec, corpus, dir.path());
  EXPECT_EQ(load_dataset(dir / "dataset.json"), corpus.dataset);
  EXPECT_EQ(load_detections(dir / "detections.jsonl"), corpus.detections);
  const auto& t = corpus.dataset.tracks[1];
  const DirectoryCropSource disk(dir / "crops");
  const SyntheticCropSource mem(SyntheticSpec::load(dir / "spec.json"));
  EXPECT_EQ(disk.crop(t, 2), mem.crop(t, 2));
}

TEST(Image, PngRoundTripCropResize) {
  Image img(7, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) {
      auto* p = img.px(x, y);
      p[0] = static_cast<std::uint8_t>(x * 30);
      p[1] = static_cast<std::uint8_t>(y * 50);
      p[2] = 200;
    }
  TempDir dir("png");
  write_png(img, dir / "a.png");
  EXPECT_EQ(read_png(dir / "a.png"), img);

  const auto c = crop(img, 2, 1, 3, 2);
  ASSERT_EQ(c.width, 3);
  ASSERT_EQ(c.height, 2);
  EXPECT_EQ(c.px(0, 0)[0], img.px(2, 1)[0]);
  EXPECT_EQ(crop(img, 5, 3, 10, 10).width, 2);
  EXPECT_THROW(crop(img, 10, 10, 3, 3), BoxOutOfImage);

  // Same-size resize is the identity up to the 1/255 scaling.
  const auto planar = resize_to_planar(img, 7, 5);
  ASSERT_EQ(planar.size(), 3u * 7 * 5);
  EXPECT_DOUBLE_EQ(planar[(0 * 5 + 2) * 7 + 3], img.px(3, 2)[0] / 255.0);
  EXPECT_DOUBLE_EQ(planar[(2 * 5 + 4) * 7 + 6], 200 / 255.0);
  Image flat(4, 4);
  std::fill(flat.rgb.begin(), flat.rgb.end(), 51);
  for (double v : resize_to_planar(flat, 9, 3)) EXPECT_NEAR(v, 0.2, 1e-12);
}
