#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ayce/core/matrix.hpp"
#include "ayce/core/rng.hpp"
#include "ayce/data/crop_source.hpp"
#include "ayce/data/dataset.hpp"
#include "ayce/data/detections.hpp"
#include "ayce/nn/graph.hpp"
#include "ayce/nn/layers.hpp"

namespace ayce::visual {

inline constexpr std::size_t kEmbeddingWidth = 256;

enum class VisualMode { VSO, VTO };

std::string_view visual_mode_name(VisualMode m);

/// Padded per-track input: `frames` x `slots` object records of width 261,
/// stored one record per row (frame-major). Slot 0 is the tracked vehicle.
struct VisualInput {
  std::size_t frames = 0;
  std::size_t slots = 0;
  Matrix data;
  std::vector<std::int64_t> frame_indices;
  std::vector<std::uint8_t> obj_mask;    // frames * slots
  std::vector<std::uint8_t> frame_mask;  // frames

  std::size_t real_frames() const;
};

/// Intersection over union of two normalised (x, y, w, h) boxes.
double iou(const std::array<double, 4>& a, const std::array<double, 4>& b);

struct AssemblyOptions {
  std::size_t cap_objects = 16;  // detections kept per frame after the overlap filter
  double iou_threshold = 0.5;    // detections overlapping the tracking box more than this are dropped
  int sentinel_class = data::DetectorClasses{}.sentinel();
  int image_width = 1920;
  int image_height = 1080;
};

/// `detections[k]` holds the filtered objects of frame `sampled[k]`.
VisualInput assemble_visual_input(const data::TrackRecord& track, std::span<const std::size_t> sampled,
                                  std::span<const std::vector<data::ObjectRecord>> detections,
                                  const AssemblyOptions& opt);
VisualInput assemble_visual_input(const data::TrackRecord& track, std::span<const std::size_t> sampled,
                                  const data::DetectionTable& table, const AssemblyOptions& opt);

/// Appends masked, all-zero object slots / frames.
VisualInput pad_objects(const VisualInput& in, std::size_t slots);
VisualInput pad_frames(const VisualInput& in, std::size_t frames);

/// Sinusoidal encoding evaluated at the given positions: row k is the
/// canonical table row at position indices[k]. Throws NonMonotoneIndices.
Matrix sampling_aware_pe(std::span<const std::int64_t> indices, std::size_t d_model);

struct EncoderConfig {
  std::size_t n_blocks = 6;
  std::size_t n_heads = 8;
  std::size_t d_model = 256;
  std::size_t d_ff = 2048;
  double dropout = 0.1;

  static EncoderConfig desk() { return {2, 4, 64, 256, 0.1}; }
  void validate() const;  // ConfigError
  nn::BlockShape shape() const { return {d_model, n_heads, d_ff, dropout}; }
};

struct VisualConfig {
  VisualMode mode = VisualMode::VTO;
  EncoderConfig encoder = EncoderConfig::desk();
  std::size_t decoder_blocks = 0;  // 0: same as encoder.n_blocks
  int crop_width = 32;
  int crop_height = 24;
  std::vector<std::size_t> conv_channels{8, 16, 32, 32};
  std::size_t frame_cap = 16;
  AssemblyOptions assembly;

  static VisualConfig paper();
  void validate() const;
};

/// Crops of the sampled frames, one planar (3 x h x w) image per row, in [0,1].
Matrix make_crop_batch(const data::CropSource& source, const data::TrackRecord& track,
                       std::span<const std::size_t> sampled, int width, int height);

/// Every frame's crop of every track, resized once; rows are gathered per draw.
class CropCache {
 public:
  CropCache() = default;
  CropCache(const data::CropSource& source, const data::Dataset& d, int width, int height);
  Matrix gather(std::size_t track, std::span<const std::size_t> sampled) const;
  std::size_t size() const { return per_track_.size(); }

 private:
  std::vector<Matrix> per_track_;
};

class VisualModel {
 public:
  VisualModel() = default;
  VisualModel(const VisualConfig& cfg, std::uint64_t seed);

  const VisualConfig& config() const { return cfg_; }
  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }

  /// (M, 3*h*w) crops -> (M, 256). Frames are independent.
  nn::Var crop_encoder(nn::Graph& g, nn::Var crops) const;
  /// (rows, 261) -> (rows, d_model).
  nn::Var input_projection(nn::Graph& g, nn::Var x) const;
  /// (frames*slots, d_model) -> (frames, d_model), masked mean over objects.
  nn::Var spatial_encode(nn::Graph& g, nn::Var x, const VisualInput& in, const nn::ForwardContext& ctx,
                         std::vector<double>* probs_out = nullptr) const;
  /// Adds the sampling-aware encoding and attends over real frames.
  nn::Var temporal_encode(nn::Graph& g, nn::Var x, std::span<const std::uint8_t> frame_mask,
                          std::span<const std::int64_t> frame_indices, const nn::ForwardContext& ctx) const;
  /// Masked mean over real frames: 1 x d_model.
  nn::Var vso_head(nn::Graph& g, nn::Var h, std::span<const std::uint8_t> frame_mask) const;
  /// Decoder fed with positional-encoding queries 0, 1, 2: 3 x d_model.
  nn::Var vto_head(nn::Graph& g, nn::Var memory, std::span<const std::uint8_t> frame_mask,
                   const nn::ForwardContext& ctx) const;
  /// d_model -> 256 (identity when d_model is already 256).
  nn::Var output_projection(nn::Graph& g, nn::Var x) const;

  /// Full composition for an assembled input and its crop batch.
  nn::Var forward(nn::Graph& g, const VisualInput& in, const Matrix& crops, const nn::ForwardContext& ctx) const;
  /// Eval-mode embedding.
  Matrix embed(const VisualInput& in, const Matrix& crops) const;

  void save(const std::filesystem::path& path, const std::string& config_text = "") const;
  static VisualModel load(const std::filesystem::path& path, std::string* config_text = nullptr);

  friend bool operator==(const VisualModel& a, const VisualModel& b) { return a.store_ == b.store_; }

 private:
  VisualConfig cfg_;
  nn::ParameterStore store_;
  std::vector<nn::Conv2d> convs_;
  nn::Linear crop_fc_;
  nn::Linear in_proj_;
  nn::TransformerEncoder spatial_, temporal_;
  nn::TransformerDecoder decoder_;
  nn::Linear out_proj_;
  bool has_out_proj_ = false;
};

/// Subsample, assemble, fill and run the model for one track. `sample_seed`
/// drives the frame draw; `ctx` carries dropout state.
struct TrackSample {
  VisualInput input;
  Matrix crops;
};
TrackSample sample_track(const VisualModel& model, const data::TrackRecord& track, std::size_t track_index,
                         const data::DetectionTable& detections, const CropCache& crops, std::uint64_t sample_seed);

Matrix forward_visual(const VisualModel& model, const data::TrackRecord& track, const data::DetectionTable& detections,
                      const data::CropSource& crops, std::uint64_t sample_seed);

}  // namespace ayce::visual
