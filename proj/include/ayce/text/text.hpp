#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ayce/core/matrix.hpp"
#include "ayce/core/rng.hpp"
#include "ayce/data/dataset.hpp"
#include "ayce/metrics/metrics.hpp"
#include "ayce/nn/graph.hpp"
#include "ayce/nn/layers.hpp"

namespace ayce::text {

inline constexpr std::size_t kEmbeddingWidth = 256;

enum class TextMode { LTO, LSO };

TextMode parse_text_mode(std::string_view s);
std::string_view text_mode_name(TextMode m);

/// Lowercased words with punctuation stripped, followed by adjacent-word
/// bigrams ("a|b"), so word order reaches the pooled embedding.
std::vector<std::string> tokenize(std::string_view sentence);

/// Maps a sentence to a fixed-width raw vector. Parameters live in the store
/// handed to the constructor of the implementation.
class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  virtual std::size_t width() const = 0;
  /// 1 x width() row. Eval mode (ctx.training == false) is deterministic.
  virtual nn::Var encode(nn::Graph& g, std::string_view sentence, const nn::ForwardContext& ctx) const = 0;
};

/// Token-embedding table (index 0 is the unknown token), mean-pooled, then a
/// tanh hidden layer.
class ToyEncoder final : public SentenceEncoder {
 public:
  ToyEncoder() = default;
  ToyEncoder(nn::ParameterStore& store, std::vector<std::string> vocabulary, std::size_t embed_dim, std::size_t width,
             Rng& rng);

  std::size_t width() const override { return hidden_.out(); }
  std::size_t embed_dim() const { return embed_dim_; }
  nn::Var encode(nn::Graph& g, std::string_view sentence, const nn::ForwardContext& ctx) const override;

  const std::vector<std::string>& vocabulary() const { return vocab_; }
  std::vector<std::size_t> token_ids(std::string_view sentence) const;

 private:
  std::vector<std::string> vocab_;  // sorted after index 0
  std::size_t embed_dim_ = 0;
  nn::ParamId table_ = 0;
  nn::Linear hidden_;
};

/// Sorted token set of all captions, with "<unk>" prepended.
std::vector<std::string> build_vocabulary(const data::Dataset& d);

/// Affine map from the encoder width to the shared 256-d space.
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(nn::ParameterStore& store, std::size_t width, Rng& rng);
  nn::Var operator()(nn::Graph& g, nn::Var x) const { return linear_(g, x); }
  const nn::Linear& linear() const { return linear_; }

 private:
  nn::Linear linear_;
};

struct TextModelConfig {
  std::size_t embed_dim = 32;
  std::size_t width = 64;
};

/// Toy encoder plus projection head sharing one parameter store.
struct TextModel {
  nn::ParameterStore store;
  ToyEncoder encoder;
  ProjectionHead head;
  std::string optimizer = "sgd";

  TextModel() = default;
  TextModel(std::vector<std::string> vocabulary, const TextModelConfig& cfg, std::uint64_t seed);

  /// 1 x 256 embedding of one string.
  nn::Var embed(nn::Graph& g, std::string_view sentence, const nn::ForwardContext& ctx) const;
  Matrix embed(std::string_view sentence) const;

  void save(const std::filesystem::path& path) const;
  static TextModel load(const std::filesystem::path& path);
  friend bool operator==(const TextModel& a, const TextModel& b) {
    return a.store == b.store && a.encoder.vocabulary() == b.encoder.vocabulary() && a.optimizer == b.optimizer;
  }
};

/// s1 + " " + s2 + " " + s3.
std::string lso_concat(const std::array<std::string, 3>& captions);

/// Eval-mode 3 x 256 embedding, one row per caption.
Matrix encode_lto(const std::array<std::string, 3>& captions, const TextModel& model);
/// Eval-mode 1 x 256 embedding of the concatenated captions.
Matrix encode_lso(const std::array<std::string, 3>& captions, const TextModel& model);
Matrix encode(const std::array<std::string, 3>& captions, const TextModel& model, TextMode mode);

struct TextTriplet {
  std::string anchor, positive, negative;
  /// (track id, caption index) for each element; index -1 marks an LSO concatenation.
  std::array<std::pair<std::string, int>, 3> provenance;
};

std::vector<TextTriplet> sample_text_triplets(const data::Dataset& d, TextMode mode, std::size_t batch, Rng& rng);

/// (1/Bs) sum max(0, dap - dan + m).
double triplet_margin_loss(std::span<const double> dap, std::span<const double> dan, double margin);

struct TextFinetuneConfig {
  metrics::Metric metric = metrics::Metric::CosineMetric;
  TextMode mode = TextMode::LTO;
  double margin = 1.0;
  std::size_t epochs = 30;
  std::size_t batch = 16;
  std::size_t steps_per_epoch = 0;  // 0: enough batches to cover every caption once
  double lr = 0.1;
  std::uint64_t seed = 0;
};

struct TextFinetuneResult {
  std::vector<metrics::IntraInterReport> history;  // initial report first
  std::vector<double> epoch_loss;
};

/// Eval-mode caption embeddings of every track, for intra/inter reports.
std::vector<Matrix> caption_embeddings(const data::Dataset& d, const TextModel& model);

/// Mean triplet loss over a fixed batch and its gradient.
double triplet_batch_loss(const TextModel& model, std::span<const TextTriplet> batch, metrics::Metric metric,
                          double margin, nn::Gradients* grads);

TextFinetuneResult finetune_text(const data::Dataset& d, TextModel& model, const TextFinetuneConfig& cfg,
                                 const std::function<void(std::size_t, const metrics::IntraInterReport&, double)>&
                                     on_epoch = {});

}  // namespace ayce::text
