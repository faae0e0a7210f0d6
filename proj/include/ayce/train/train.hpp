#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ayce/core/config_file.hpp"
#include "ayce/core/matrix.hpp"
#include "ayce/data/dataset.hpp"
#include "ayce/data/detections.hpp"
#include "ayce/metrics/metrics.hpp"
#include "ayce/nn/graph.hpp"
#include "ayce/text/text.hpp"
#include "ayce/visual/visual.hpp"

namespace ayce::train {

enum class ModelVariant { VS_LT, VS_LS, VT_LT };

ModelVariant parse_variant(std::string_view s);  // vs-lt | vs-ls | vt-lt, any case
std::string_view variant_name(ModelVariant v);
visual::VisualMode visual_mode(ModelVariant v);
text::TextMode text_mode(ModelVariant v);
std::size_t visual_arity(ModelVariant v);
std::size_t text_arity(ModelVariant v);

struct LossConfig {
  double margin = 1.0;
  double beta = 0.1;
  metrics::Metric metric = metrics::Metric::Euclidean;
  metrics::Aggregation positive = metrics::Aggregation::Min;
  metrics::Aggregation negative = metrics::Aggregation::Mean;

  void validate() const;
};

/// Aggregated anchor/positive distance (min by default).
double phi(const Matrix& anchor, const Matrix& positive, const LossConfig& cfg);
/// Aggregated anchor/negative distance (mean by default).
double neg_distance(const Matrix& anchor, const Matrix& negative, const LossConfig& cfg);

/// Hinge on phi - neg_distance + m averaged over the batch, plus beta * mean phi.
double composite_loss(std::span<const Matrix> anchors, std::span<const Matrix> positives,
                      std::span<const Matrix> negatives, const LossConfig& cfg);

enum class Mining { Hardest, Farthest };

/// Per anchor i, the candidate j != i whose texts[j] maximises neg_distance
/// (Farthest, the default) or minimises it (Hardest). Ties go to the lowest
/// index. Throws NoCandidates for fewer than two entries.
std::vector<std::size_t> mine_hard_negatives(std::span<const Matrix> anchors, std::span<const Matrix> texts,
                                             const LossConfig& cfg, Mining mining = Mining::Farthest);

Mining parse_mining(std::string_view s);
std::string_view mining_name(Mining m);

struct TrainConfig {
  std::size_t epochs = 680;
  std::size_t batch = 8;
  double lr = 3.5e-5;
  std::vector<std::pair<std::size_t, double>> milestones{{450, 2.5e-5}, {650, 1.5e-5}};
  std::string optimizer = "adam";
  Mining mining = Mining::Farthest;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
  std::size_t eval_every = 0;        // epochs; 0 disables MRR tracking
  std::size_t jobs = 0;              // 0: OpenMP default

  /// Full-scale schedule.
  static TrainConfig paper_2021();
  /// 200 epochs with the milestones rescaled to the same fractions of training.
  static TrainConfig desk();
  void validate() const;  // ConfigError
};

/// Piecewise-constant learning rate.
double lr_at(std::size_t epoch, const TrainConfig& cfg);

/// Everything a training run reads besides the configs.
struct TrainingData {
  const data::Dataset* dataset = nullptr;
  const data::DetectionTable* detections = nullptr;
  const visual::CropCache* crops = nullptr;
  std::vector<Matrix> text;  // frozen text embedding per track
};

std::vector<Matrix> text_embeddings(const data::Dataset& d, const text::TextModel& model, text::TextMode mode);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0;
  double lr = 0;
  std::optional<double> mrr;
};

struct TrainResult {
  std::vector<EpochRecord> history;
};

/// Loss and parameter gradient of one batch with fixed negatives.
double batch_loss(const visual::VisualModel& model, const TrainingData& td, std::span<const std::size_t> tracks,
                  std::span<const std::size_t> negatives, const LossConfig& loss, std::uint64_t batch_seed,
                  bool training, nn::Gradients* grads);

/// Mean reciprocal rank of text->visual retrieval over the training tracks,
/// with a fixed evaluation seed.
double train_mrr(const visual::VisualModel& model, const TrainingData& td, const LossConfig& loss,
                 std::uint64_t eval_seed);

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Called at the checkpoint cadence with the epoch count reached.
  std::function<void(std::size_t, const visual::VisualModel&)> checkpoint;
};

TrainResult train_visual(visual::VisualModel& model, const TrainingData& td, const LossConfig& loss,
                         const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Writes "epoch,loss,lr,mrr" rows; an empty mrr field when not evaluated.
void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);

/// [model] [loss] [train] sections of a config file.
struct RunConfig {
  ModelVariant variant = ModelVariant::VT_LT;
  visual::VisualConfig model;
  LossConfig loss;
  TrainConfig train = TrainConfig::desk();

  static RunConfig from_file(const ConfigFile& f);
  ConfigFile to_file() const;
};

}  // namespace ayce::train
