#include "ayce/visual/visual.hpp"

#include <algorithm>
#include <cmath>

#include "ayce/core/binary_io.hpp"
#include "ayce/core/errors.hpp"
#include "ayce/data/sampling.hpp"
#include "ayce/nn/ops.hpp"

namespace ayce::visual {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

std::string_view visual_mode_name(VisualMode m) { return m == VisualMode::VSO ? "VSO" : "VTO"; }

std::size_t VisualInput::real_frames() const {
  return static_cast<std::size_t>(std::count(frame_mask.begin(), frame_mask.end(), std::uint8_t{1}));
}

double iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double ix = std::max(0.0, std::min(a[0] + a[2], b[0] + b[2]) - std::max(a[0], b[0]));
  const double iy = std::max(0.0, std::min(a[1] + a[3], b[1] + b[3]) - std::max(a[1], b[1]));
  const double inter = ix * iy;
  const double uni = a[2] * a[3] + b[2] * b[3] - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

VisualInput assemble_visual_input(const data::TrackRecord& track, std::span<const std::size_t> sampled,
                                  std::span<const std::vector<data::ObjectRecord>> detections,
                                  const AssemblyOptions& opt) {
  if (detections.size() != sampled.size()) throw ShapeError("one detection list per sampled frame is required");
  if (opt.image_width <= 0 || opt.image_height <= 0) throw BoxOutOfImage("image size must be positive");
  const double W = opt.image_width, H = opt.image_height;
  const std::size_t M = sampled.size();

  std::vector<std::array<double, 4>> boxes(M);
  std::vector<std::vector<const data::ObjectRecord*>> kept(M);
  std::size_t max_objects = 0;
  for (std::size_t k = 0; k < M; ++k) {
    if (sampled[k] >= track.frame_count()) throw ShapeError("sampled frame out of range for track '" + track.id + "'");
    const data::Box& b = track.boxes[sampled[k]];
    // Half a pixel of slack absorbs rounding in stored boxes.
    if (b.x < -0.5 || b.y < -0.5 || b.x + b.w > W + 0.5 || b.y + b.h > H + 0.5)
      throw BoxOutOfImage("track '" + track.id + "' frame " + std::to_string(sampled[k]) + ": box outside the image");
    const double x = std::clamp(b.x / W, 0.0, 1.0), y = std::clamp(b.y / H, 0.0, 1.0);
    boxes[k] = {x, y, std::min(b.w / W, 1.0 - x), std::min(b.h / H, 1.0 - y)};
    for (const auto& o : detections[k]) {
      if (kept[k].size() >= opt.cap_objects) break;
      if (iou(o.box, boxes[k]) > opt.iou_threshold) continue;
      kept[k].push_back(&o);
    }
    max_objects = std::max(max_objects, kept[k].size());
  }

  VisualInput in;
  in.frames = M;
  in.slots = 1 + max_objects;
  in.data = Matrix(M * in.slots, data::kObjectWidth);
  in.obj_mask.assign(M * in.slots, 0);
  in.frame_mask.assign(M, 1);
  in.frame_indices.resize(M);
  for (std::size_t k = 0; k < M; ++k) {
    in.frame_indices[k] = static_cast<std::int64_t>(sampled[k]);
    auto row0 = in.data.row(k * in.slots);
    row0[0] = opt.sentinel_class;
    std::copy(boxes[k].begin(), boxes[k].end(), row0.begin() + 1);
    in.obj_mask[k * in.slots] = 1;
    for (std::size_t s = 0; s < kept[k].size(); ++s) {
      const data::ObjectRecord& o = *kept[k][s];
      if (o.feat.size() != data::kFeatureWidth) throw FeatureWidthError("object feature width must be 256");
      auto row = in.data.row(k * in.slots + 1 + s);
      row[0] = o.cls;
      std::copy(o.box.begin(), o.box.end(), row.begin() + 1);
      std::copy(o.feat.begin(), o.feat.end(), row.begin() + 5);
      in.obj_mask[k * in.slots + 1 + s] = 1;
    }
  }
  return in;
}

VisualInput assemble_visual_input(const data::TrackRecord& track, std::span<const std::size_t> sampled,
                                  const data::DetectionTable& table, const AssemblyOptions& opt) {
  std::vector<std::vector<data::ObjectRecord>> per_frame;
  per_frame.reserve(sampled.size());
  for (std::size_t pos : sampled) per_frame.push_back(table.at(track.id, static_cast<std::int64_t>(pos)));
  return assemble_visual_input(track, sampled, per_frame, opt);
}

VisualInput pad_objects(const VisualInput& in, std::size_t slots) {
  if (slots < in.slots) throw ShapeError("pad_objects cannot shrink the object axis");
  VisualInput out = in;
  out.slots = slots;
  out.data = Matrix(in.frames * slots, in.data.cols);
  out.obj_mask.assign(in.frames * slots, 0);
  for (std::size_t k = 0; k < in.frames; ++k)
    for (std::size_t s = 0; s < in.slots; ++s) {
      const auto src = in.data.row(k * in.slots + s);
      std::copy(src.begin(), src.end(), out.data.row(k * slots + s).begin());
      out.obj_mask[k * slots + s] = in.obj_mask[k * in.slots + s];
    }
  return out;
}

VisualInput pad_frames(const VisualInput& in, std::size_t frames) {
  if (frames < in.frames) throw ShapeError("pad_frames cannot shrink the frame axis");
  VisualInput out = in;
  out.frames = frames;
  out.data.rows = frames * in.slots;
  out.data.data.resize(out.data.rows * out.data.cols, 0.0);
  out.obj_mask.resize(frames * in.slots, 0);
  out.frame_mask.resize(frames, 0);
  std::int64_t next = in.frame_indices.empty() ? 0 : in.frame_indices.back() + 1;
  for (std::size_t k = in.frames; k < frames; ++k) out.frame_indices.push_back(next++);
  return out;
}

Matrix sampling_aware_pe(std::span<const std::int64_t> indices, std::size_t d_model) {
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] < 0) throw NonMonotoneIndices("positional indices must be non-negative");
    if (k > 0 && indices[k] <= indices[k - 1]) throw NonMonotoneIndices("positional indices must strictly increase");
  }
  Matrix pe(indices.size(), d_model);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const double pos = static_cast<double>(indices[k]);
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      pe(k, i) = std::sin(angle);
      if (i + 1 < d_model) pe(k, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

void EncoderConfig::validate() const {
  if (n_blocks == 0 || n_heads == 0 || d_model == 0 || d_ff == 0)
    throw ConfigError("encoder dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " + std::to_string(n_heads));
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
}

VisualConfig VisualConfig::paper() {
  VisualConfig c;
  c.encoder = EncoderConfig{};
  c.crop_width = 110;
  c.crop_height = 90;
  c.frame_cap = data::kDefaultFrameCap;
  return c;
}

void VisualConfig::validate() const {
  encoder.validate();
  if (crop_width < 8 || crop_height < 8) throw ConfigError("crop size must be at least 8x8");
  if (conv_channels.empty()) throw ConfigError("the crop encoder needs at least one convolution");
  if (frame_cap < 1) throw ConfigError("frame cap must be positive");
}

Matrix make_crop_batch(const data::CropSource& source, const data::TrackRecord& track,
                       std::span<const std::size_t> sampled, int width, int height) {
  Matrix out(sampled.size(), static_cast<std::size_t>(3) * width * height);
  for (std::size_t k = 0; k < sampled.size(); ++k) {
    const auto planar = data::resize_to_planar(source.crop(track, sampled[k]), width, height);
    std::copy(planar.begin(), planar.end(), out.row(k).begin());
  }
  return out;
}

CropCache::CropCache(const data::CropSource& source, const data::Dataset& d, int width, int height) {
  per_track_.resize(d.size());
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < d.size(); ++i) {
    all.resize(d.tracks[i].frame_count());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    per_track_[i] = make_crop_batch(source, d.tracks[i], all, width, height);
  }
}

Matrix CropCache::gather(std::size_t track, std::span<const std::size_t> sampled) const {
  const Matrix& src = per_track_.at(track);
  Matrix out(sampled.size(), src.cols);
  for (std::size_t k = 0; k < sampled.size(); ++k) {
    const auto r = src.row(sampled[k]);
    std::copy(r.begin(), r.end(), out.row(k).begin());
  }
  return out;
}

VisualModel::VisualModel(const VisualConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, 0x766973));
  nn::ConvGeometry geo;
  geo.in_channels = 3;
  geo.height = static_cast<std::size_t>(cfg.crop_height);
  geo.width = static_cast<std::size_t>(cfg.crop_width);
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    geo.out_channels = cfg.conv_channels[i];
    convs_.emplace_back(store_, "crop.conv" + std::to_string(i), geo, rng);
    geo = nn::ConvGeometry{geo.out_channels, geo.out_height(), geo.out_width(), 0};
  }
  crop_fc_ = nn::Linear(store_, "crop.fc", geo.in_channels * geo.height * geo.width, data::kFeatureWidth, rng);
  const auto& e = cfg.encoder;
  in_proj_ = nn::Linear(store_, "input_proj", data::kObjectWidth, e.d_model, rng);
  spatial_ = nn::TransformerEncoder(store_, "spatial", e.shape(), e.n_blocks, rng);
  temporal_ = nn::TransformerEncoder(store_, "temporal", e.shape(), e.n_blocks, rng);
  if (cfg.mode == VisualMode::VTO)
    decoder_ = nn::TransformerDecoder(store_, "decoder", e.shape(), cfg.decoder_blocks ? cfg.decoder_blocks : e.n_blocks,
                                      rng);
  has_out_proj_ = e.d_model != kEmbeddingWidth;
  if (has_out_proj_) out_proj_ = nn::Linear(store_, "output_proj", e.d_model, kEmbeddingWidth, rng);
}

nn::Var VisualModel::crop_encoder(nn::Graph& g, nn::Var crops) const {
  const std::size_t expected = static_cast<std::size_t>(3) * cfg_.crop_width * cfg_.crop_height;
  if (g.value(crops).cols != expected)
    throw ShapeError("crop batch rows must hold 3x" + std::to_string(cfg_.crop_height) + "x" +
                     std::to_string(cfg_.crop_width) + " pixels");
  nn::Var x = crops;
  for (const auto& c : convs_) x = nn::relu(g, c(g, x));
  return crop_fc_(g, x);
}

nn::Var VisualModel::input_projection(nn::Graph& g, nn::Var x) const {
  if (g.value(x).cols != data::kObjectWidth) throw ShapeError("input projection expects 261-wide rows");
  return in_proj_(g, x);
}

nn::Var VisualModel::spatial_encode(nn::Graph& g, nn::Var x, const VisualInput& in, const nn::ForwardContext& ctx,
                                    std::vector<double>* probs_out) const {
  if (g.value(x).rows != in.frames * in.slots) throw ShapeError("spatial input rows do not match frames x slots");
  for (std::size_t k = 0; k < in.frames; ++k) {
    const auto first = in.obj_mask.begin() + static_cast<std::ptrdiff_t>(k * in.slots);
    if (in.frame_mask[k] && std::none_of(first, first + static_cast<std::ptrdiff_t>(in.slots),
                                         [](std::uint8_t m) { return m != 0; }))
      throw AllMasked("frame " + std::to_string(k) + " has no real object");
  }
  nn::AttentionLayout layout{in.frames, in.slots, in.slots, in.obj_mask};
  nn::Var h = x;
  const auto& blocks = spatial_.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b)
    h = blocks[b].forward(g, h, layout, ctx, b + 1 == blocks.size() ? probs_out : nullptr);
  return nn::group_mean(g, h, in.slots, in.obj_mask);
}

nn::Var VisualModel::temporal_encode(nn::Graph& g, nn::Var x, std::span<const std::uint8_t> frame_mask,
                                     std::span<const std::int64_t> frame_indices, const nn::ForwardContext& ctx) const {
  const Matrix& xv = g.value(x);
  if (xv.rows != frame_mask.size() || xv.rows != frame_indices.size() || xv.cols != cfg_.encoder.d_model)
    throw ShapeError("temporal input does not match the frame masks");
  const nn::Var h = nn::add_constant(g, x, sampling_aware_pe(frame_indices, cfg_.encoder.d_model));
  nn::AttentionLayout layout{1, xv.rows, xv.rows, {frame_mask.begin(), frame_mask.end()}};
  return temporal_.forward(g, h, layout, ctx);
}

nn::Var VisualModel::vso_head(nn::Graph& g, nn::Var h, std::span<const std::uint8_t> frame_mask) const {
  if (std::none_of(frame_mask.begin(), frame_mask.end(), [](std::uint8_t m) { return m != 0; }))
    throw AllMasked("no real frame to pool");
  return nn::group_mean(g, h, g.value(h).rows, frame_mask);
}

nn::Var VisualModel::vto_head(nn::Graph& g, nn::Var memory, std::span<const std::uint8_t> frame_mask,
                              const nn::ForwardContext& ctx) const {
  const Matrix& mv = g.value(memory);
  if (mv.rows != frame_mask.size() || mv.cols != cfg_.encoder.d_model) throw ShapeError("decoder memory shape");
  if (cfg_.mode != VisualMode::VTO) throw ShapeError("model was built without the decoder head");
  const std::int64_t query_pos[3] = {0, 1, 2};
  const nn::Var queries = g.constant(sampling_aware_pe(query_pos, cfg_.encoder.d_model));
  nn::AttentionLayout self_layout{1, 3, 3, {}};
  nn::AttentionLayout cross_layout{1, 3, mv.rows, {frame_mask.begin(), frame_mask.end()}};
  return decoder_.forward(g, queries, memory, self_layout, cross_layout, ctx);
}

nn::Var VisualModel::output_projection(nn::Graph& g, nn::Var x) const {
  return has_out_proj_ ? out_proj_(g, x) : x;
}

nn::Var VisualModel::forward(nn::Graph& g, const VisualInput& in, const Matrix& crops,
                             const nn::ForwardContext& ctx) const {
  std::vector<std::size_t> slot0_rows;
  for (std::size_t k = 0; k < in.frames; ++k)
    if (in.frame_mask[k]) slot0_rows.push_back(k * in.slots);
  if (crops.rows != slot0_rows.size()) throw ShapeError("one crop per real frame is required");
  const nn::Var feats = crop_encoder(g, g.constant(crops));
  const nn::Var filled = nn::place(g, in.data, feats, slot0_rows, 5);
  const nn::Var spatial = spatial_encode(g, input_projection(g, filled), in, ctx);
  const nn::Var temporal = temporal_encode(g, spatial, in.frame_mask, in.frame_indices, ctx);
  const nn::Var head = cfg_.mode == VisualMode::VSO ? vso_head(g, temporal, in.frame_mask)
                                                    : vto_head(g, temporal, in.frame_mask, ctx);
  return output_projection(g, head);
}

Matrix VisualModel::embed(const VisualInput& in, const Matrix& crops) const {
  nn::Graph g(store_);
  return g.value(forward(g, in, crops, {}));
}

void VisualModel::save(const std::filesystem::path& path, const std::string& config_text) const {
  BinaryWriter w;
  w.magic("AYCE-VIS");
  w.u32(kCheckpointVersion);
  w.u32(cfg_.mode == VisualMode::VSO ? 0 : 1);
  const auto& e = cfg_.encoder;
  w.u64(e.n_blocks);
  w.u64(e.n_heads);
  w.u64(e.d_model);
  w.u64(e.d_ff);
  w.f64(e.dropout);
  w.u64(cfg_.decoder_blocks);
  w.u32(static_cast<std::uint32_t>(cfg_.crop_width));
  w.u32(static_cast<std::uint32_t>(cfg_.crop_height));
  w.u64(cfg_.conv_channels.size());
  for (auto c : cfg_.conv_channels) w.u64(c);
  w.u64(cfg_.frame_cap);
  w.u64(cfg_.assembly.cap_objects);
  w.f64(cfg_.assembly.iou_threshold);
  w.u32(static_cast<std::uint32_t>(cfg_.assembly.sentinel_class));
  w.u32(static_cast<std::uint32_t>(cfg_.assembly.image_width));
  w.u32(static_cast<std::uint32_t>(cfg_.assembly.image_height));
  w.str(config_text);
  store_.write(w);
  w.commit(path);
}

VisualModel VisualModel::load(const std::filesystem::path& path, std::string* config_text) {
  BinaryReader r(path);
  try {
    r.expect_magic("AYCE-VIS");
    if (const auto v = r.u32(); v != kCheckpointVersion)
      throw CheckpointIOError("unsupported visual checkpoint version " + std::to_string(v));
    VisualConfig c;
    c.mode = r.u32() == 0 ? VisualMode::VSO : VisualMode::VTO;
    c.encoder.n_blocks = r.u64();
    c.encoder.n_heads = r.u64();
    c.encoder.d_model = r.u64();
    c.encoder.d_ff = r.u64();
    c.encoder.dropout = r.f64();
    c.decoder_blocks = r.u64();
    c.crop_width = static_cast<int>(r.u32());
    c.crop_height = static_cast<int>(r.u32());
    c.conv_channels.resize(r.u64());
    for (auto& ch : c.conv_channels) ch = r.u64();
    c.frame_cap = r.u64();
    c.assembly.cap_objects = r.u64();
    c.assembly.iou_threshold = r.f64();
    c.assembly.sentinel_class = static_cast<int>(r.u32());
    c.assembly.image_width = static_cast<int>(r.u32());
    c.assembly.image_height = static_cast<int>(r.u32());
    std::string text = r.str();
    VisualModel m(c, 0);
    m.store_.read_into(r);
    if (!r.at_end()) throw CheckpointIOError("trailing bytes in " + path.string());
    if (config_text) *config_text = std::move(text);
    return m;
  } catch (const CheckpointIOError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointIOError(path.string() + ": " + e.what());
  }
}

TrackSample sample_track(const VisualModel& model, const data::TrackRecord& track, std::size_t track_index,
                         const data::DetectionTable& detections, const CropCache& crops, std::uint64_t sample_seed) {
  Rng rng(sample_seed);
  const auto sampled = data::subsample_frames(track.frame_count(), model.config().frame_cap, rng);
  TrackSample s;
  s.input = assemble_visual_input(track, sampled, detections, model.config().assembly);
  s.crops = crops.gather(track_index, sampled);
  return s;
}

Matrix forward_visual(const VisualModel& model, const data::TrackRecord& track, const data::DetectionTable& detections,
                      const data::CropSource& crops, std::uint64_t sample_seed) {
  Rng rng(sample_seed);
  const auto sampled = data::subsample_frames(track.frame_count(), model.config().frame_cap, rng);
  const auto in = assemble_visual_input(track, sampled, detections, model.config().assembly);
  const auto& c = model.config();
  return model.embed(in, make_crop_batch(crops, track, sampled, c.crop_width, c.crop_height));
}

}  // namespace ayce::visual
