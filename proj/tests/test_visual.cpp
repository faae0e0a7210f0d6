#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ayce/core/errors.hpp"
#include "ayce/data/synthetic.hpp"
#include "ayce/visual/visual.hpp"
#include "support.hpp"

using namespace ayce;
using namespace ayce::visual;
using ayce::testing::random_matrix;
using ayce::testing::TempDir;

namespace {

VisualConfig tiny_config(VisualMode mode = VisualMode::VTO) {
  VisualConfig c;
  c.mode = mode;
  c.encoder = {1, 2, 16, 24, 0.1};
  c.crop_width = 16;
  c.crop_height = 12;
  c.conv_channels = {4, 8};
  return c;
}

// Random input: slot 0 always real, other slots real with probability 0.6.
VisualInput random_input(std::size_t frames, std::size_t slots, Rng& rng) {
  VisualInput in;
  in.frames = frames;
  in.slots = slots;
  in.data = random_matrix(frames * slots, data::kObjectWidth, rng);
  in.obj_mask.assign(frames * slots, 0);
  in.frame_mask.assign(frames, 1);
  std::int64_t pos = 0;
  for (std::size_t k = 0; k < frames; ++k) {
    pos += 1 + static_cast<std::int64_t>(uniform_index(rng, 5));
    in.frame_indices.push_back(pos);
    for (std::size_t s = 0; s < slots; ++s) {
      const bool real = s == 0 || uniform01(rng) < 0.6;
      in.obj_mask[k * slots + s] = real;
      if (!real)
        for (double& v : in.data.row(k * slots + s)) v = 0.0;
    }
  }
  return in;
}

Matrix spatial(const VisualModel& m, const VisualInput& in) {
  nn::Graph g(m.store());
  return g.value(m.spatial_encode(g, m.input_projection(g, g.constant(in.data)), in, {}));
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Canonical sinusoidal table row computed from the textbook definition.
std::vector<double> canonical_pe_row(double pos, std::size_t d) {
  std::vector<double> row(d);
  for (std::size_t j = 0; j < d / 2; ++j) {
    const double w = std::exp(-std::log(10000.0) * (2.0 * j) / d);
    row[2 * j] = std::sin(pos * w);
    row[2 * j + 1] = std::cos(pos * w);
  }
  return row;
}

}  // namespace

TEST(Iou, KnownValues) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 0.2, 0.2}, {0, 0, 0.2, 0.2}), 1.0);
  EXPECT_EQ(iou({0, 0, 0.1, 0.1}, {0.5, 0.5, 0.1, 0.1}), 0.0);
  EXPECT_NEAR(iou({0, 0, 0.2, 0.2}, {0.1, 0, 0.2, 0.2}), 0.02 / 0.06, 1e-12);
}

TEST(Assembly, SlotZeroIsTrackedVehicle) {
  data::TrackRecord t;
  t.id = "a";
  t.frames = {std::int64_t{0}, std::int64_t{1}};
  t.boxes = {{192, 108, 384, 216}, {0, 0, 1920, 1080}};
  t.captions = {"x", "y", "z"};
  data::ObjectRecord overlap{3, {0.1, 0.1, 0.2, 0.2}};
  data::ObjectRecord far{5, {0.7, 0.7, 0.1, 0.1}};
  far.feat.assign(256, 0.25);
  std::vector<std::vector<data::ObjectRecord>> det{{overlap, far, far}, {}};
  const std::vector<std::size_t> sampled{0, 1};
  AssemblyOptions opt;
  const auto in = assemble_visual_input(t, sampled, det, opt);
  EXPECT_EQ(in.data.cols, 261u);
  EXPECT_EQ(in.slots, 3u);
  EXPECT_EQ(in.data(0, 0), 12.0);
  EXPECT_DOUBLE_EQ(in.data(0, 1), 0.1);
  EXPECT_DOUBLE_EQ(in.data(0, 3), 0.2);
  EXPECT_EQ(in.data(0, 5), 0.0);  // filled by the crop encoder later
  EXPECT_EQ(in.data(1, 0), 5.0);  // the overlapping detection was dropped
  EXPECT_EQ(in.data(1, 5), 0.25);
  const std::vector<std::uint8_t> mask{1, 1, 1, 1, 0, 0};
  EXPECT_EQ(in.obj_mask, mask);
  EXPECT_EQ(in.frame_indices, (std::vector<std::int64_t>{0, 1}));

  opt.cap_objects = 1;
  EXPECT_EQ(assemble_visual_input(t, sampled, det, opt).slots, 2u);
  t.boxes[1] = {1900, 0, 100, 10};
  EXPECT_THROW(assemble_visual_input(t, sampled, det, AssemblyOptions{}), BoxOutOfImage);
}

TEST(Padding, AppendsMaskedZeros) {
  Rng rng(1);
  const auto in = random_input(3, 2, rng);
  const auto po = pad_objects(in, 5);
  EXPECT_EQ(po.slots, 5u);
  EXPECT_EQ(po.obj_mask[3], 0);
  EXPECT_EQ(po.data(4, 7), 0.0);
  const auto pf = pad_frames(in, 5);
  EXPECT_EQ(pf.frame_mask, (std::vector<std::uint8_t>{1, 1, 1, 0, 0}));
  EXPECT_EQ(pf.frame_indices[3], in.frame_indices[2] + 1);
  EXPECT_EQ(pf.real_frames(), 3u);
  EXPECT_THROW(pad_frames(in, 2), ShapeError);
}

TEST(PositionalEncoding, MatchesCanonicalTable) {
  const std::size_t d = 64, m = 20;
  std::vector<std::int64_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  const auto pe = sampling_aware_pe(idx, d);
  for (std::size_t k = 0; k < m; ++k) EXPECT_LT(max_abs_diff(pe.row(k), canonical_pe_row(double(k), d)), 1e-12);

  const std::vector<std::int64_t> gathered{3, 7, 8, 19};
  const auto pg = sampling_aware_pe(gathered, d);
  for (std::size_t k = 0; k < gathered.size(); ++k)
    EXPECT_TRUE(std::equal(pg.row(k).begin(), pg.row(k).end(), pe.row(gathered[k]).begin()));
  EXPECT_THROW(sampling_aware_pe(std::vector<std::int64_t>{2, 2}, d), NonMonotoneIndices);
  EXPECT_THROW(sampling_aware_pe(std::vector<std::int64_t>{5, 1}, d), NonMonotoneIndices);
}

TEST(Masking, SpatialInvariantToPermutationAndPadding) {
  Rng rng(2);
  const VisualModel model(tiny_config(), 3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto in = random_input(3, 4, rng);
    const auto base = spatial(model, in);

    auto perm = in;
    for (std::size_t k = 0; k < in.frames; ++k) {
      std::vector<std::size_t> order(in.slots);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t s = 0; s < in.slots; ++s) {
        const auto src = in.data.row(k * in.slots + order[s]);
        std::copy(src.begin(), src.end(), perm.data.row(k * in.slots + s).begin());
        perm.obj_mask[k * in.slots + s] = in.obj_mask[k * in.slots + order[s]];
      }
    }
    EXPECT_LT(max_abs_diff(base.data, spatial(model, perm).data), 1e-5);
    EXPECT_LT(max_abs_diff(base.data, spatial(model, pad_objects(in, 7)).data), 1e-5);
  }
}

TEST(Masking, TemporalAndDecoderInvariantToPaddedFrames) {
  Rng rng(4);
  const VisualModel model(tiny_config(), 5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t frames = 2 + uniform_index(rng, 4);
    const auto in = random_input(frames, 3, rng);
    const auto padded = pad_frames(in, frames + 3);
    auto run = [&](const VisualInput& x) {
      nn::Graph g(model.store());
      auto s = model.spatial_encode(g, model.input_projection(g, g.constant(x.data)), x, {});
      auto t = model.temporal_encode(g, s, x.frame_mask, x.frame_indices, {});
      auto v = model.vto_head(g, t, x.frame_mask, {});
      return std::pair{g.value(t), g.value(v)};
    };
    const auto [t0, v0] = run(in);
    const auto [t1, v1] = run(padded);
    EXPECT_LT(max_abs_diff(t0.data, std::span<const double>(t1.data).first(t0.size())), 1e-5);
    EXPECT_LT(max_abs_diff(v0.data, v1.data), 1e-5);
  }
}

TEST(Model, OutputArities) {
  Rng rng(6);
  for (auto mode : {VisualMode::VSO, VisualMode::VTO}) {
    const VisualModel model(tiny_config(mode), 7);
    const auto in = random_input(3, 2, rng);
    const auto crops = random_matrix(3, 3 * 12 * 16, rng, 0.0, 1.0);
    const auto e = model.embed(in, crops);
    EXPECT_EQ(e.rows, mode == VisualMode::VSO ? 1u : 3u);
    EXPECT_EQ(e.cols, 256u);
  }
}

TEST(Model, CropsFillSlotZeroOfRealFramesOnly) {
  Rng rng(8);
  const VisualModel model(tiny_config(), 9);
  const auto in = random_input(3, 2, rng);
  const auto crops = random_matrix(3, 3 * 12 * 16, rng, 0.0, 1.0);
  const auto padded = pad_frames(in, 5);
  const auto a = model.embed(in, crops);
  const auto b = model.embed(padded, crops);
  EXPECT_LT(max_abs_diff(a.data, b.data), 1e-5);
  EXPECT_THROW(model.embed(in, random_matrix(2, 3 * 12 * 16, rng)), ShapeError);
}

TEST(Model, AllMaskedFrameIsRejected) {
  Rng rng(10);
  const VisualModel model(tiny_config(), 11);
  auto in = random_input(2, 2, rng);
  in.obj_mask[2] = 0;
  in.obj_mask[3] = 0;
  nn::Graph g(model.store());
  EXPECT_THROW(model.spatial_encode(g, model.input_projection(g, g.constant(in.data)), in, {}), AllMasked);
}

TEST(Model, CheckpointRoundTrip) {
  Rng rng(12);
  const VisualModel model(tiny_config(), 13);
  TempDir dir("vis");
  model.save(dir / "m.ckpt", "[model]\nd_model = 16\n");
  std::string cfg;
  const auto back = VisualModel::load(dir / "m.ckpt", &cfg);
  EXPECT_TRUE(back == model);
  EXPECT_EQ(cfg, "[model]\nd_model = 16\n");
  EXPECT_EQ(back.config().encoder.d_model, 16u);
  const auto in = random_input(3, 2, rng);
  const auto crops = random_matrix(3, 3 * 12 * 16, rng, 0.0, 1.0);
  EXPECT_EQ(back.embed(in, crops), model.embed(in, crops));
  std::ofstream(dir / "bad.ckpt") << "AYCE-TXT garbage";
  EXPECT_THROW(VisualModel::load(dir / "bad.ckpt"), CheckpointIOError);
}

TEST(Config, Validation) {
  EncoderConfig e{2, 3, 64, 128, 0.1};
  EXPECT_THROW(e.validate(), ConfigError);
  EXPECT_NO_THROW(EncoderConfig::desk().validate());
  EXPECT_NO_THROW(EncoderConfig{}.validate());
  const auto p = VisualConfig::paper();
  EXPECT_EQ(p.encoder.d_model, 256u);
  EXPECT_EQ(p.encoder.n_blocks, 6u);
  EXPECT_EQ(p.encoder.n_heads, 8u);
  EXPECT_EQ(p.frame_cap, 80u);
}

TEST(Pipeline, SyntheticTrackEndToEnd) {
  data::SyntheticSpec spec;
  spec.n_tracks = 2;
  const auto corpus = data::generate_synthetic(spec, 14);
  const data::SyntheticCropSource src(spec);
  auto cfg = tiny_config();
  cfg.frame_cap = 4;
  const VisualModel model(cfg, 15);
  const auto& t = corpus.dataset.tracks[0];
  const auto a = forward_visual(model, t, corpus.detections, src, 16);
  const auto b = forward_visual(model, t, corpus.detections, src, 16);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.rows, 3u);
  const CropCache cache(src, corpus.dataset, cfg.crop_width, cfg.crop_height);
  const auto s = sample_track(model, t, 0, corpus.detections, cache, 16);
  EXPECT_EQ(s.input.frames, std::min<std::size_t>(4, t.frame_count()));
  EXPECT_EQ(s.crops.rows, s.input.frames);
  EXPECT_EQ(model.embed(s.input, s.crops), a);
}
