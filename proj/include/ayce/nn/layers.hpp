#pragma once

#include <string>
#include <vector>

#include "ayce/core/rng.hpp"
#include "ayce/nn/graph.hpp"
#include "ayce/nn/ops.hpp"

namespace ayce::nn {

/// Train/eval switch plus the randomness used by dropout in training mode.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;

  double dropout(double p) const { return training ? p : 0.0; }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
Matrix fan_in_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  Var operator()(Graph& g, Var x) const;
  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }
  ParamId weight() const { return w_; }
  ParamId bias() const { return b_; }

 private:
  ParamId w_ = 0, b_ = 0;
  std::size_t in_ = 0, out_ = 0;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t width);
  Var operator()(Graph& g, Var x) const;

 private:
  ParamId gamma_ = 0, beta_ = 0;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t heads, Rng& rng);

  Var forward(Graph& g, Var queries, Var keys_values, const AttentionLayout& layout,
              std::vector<double>* probs_out = nullptr) const;

 private:
  Linear wq_, wk_, wv_, wo_;
  std::size_t heads_ = 1;
};

struct BlockShape {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t d_ff = 256;
  double dropout = 0.1;
};

/// Post-norm encoder block: x = LN(x + Drop(MHSA(x))); x = LN(x + Drop(FFN(x))).
class EncoderBlock {
 public:
  EncoderBlock() = default;
  EncoderBlock(ParameterStore& store, const std::string& name, const BlockShape& shape, Rng& rng);
  Var forward(Graph& g, Var x, const AttentionLayout& self_layout, const ForwardContext& ctx,
              std::vector<double>* probs_out = nullptr) const;

 private:
  MultiHeadAttention attn_;
  LayerNorm ln1_, ln2_;
  Linear ff1_, ff2_;
  double dropout_ = 0.0;
};

/// Post-norm decoder block: self-attention over the queries, encoder-decoder
/// attention into the memory, then the feed-forward sublayer.
class DecoderBlock {
 public:
  DecoderBlock() = default;
  DecoderBlock(ParameterStore& store, const std::string& name, const BlockShape& shape, Rng& rng);
  Var forward(Graph& g, Var x, Var memory, const AttentionLayout& self_layout, const AttentionLayout& cross_layout,
              const ForwardContext& ctx) const;

 private:
  MultiHeadAttention self_attn_, cross_attn_;
  LayerNorm ln1_, ln2_, ln3_;
  Linear ff1_, ff2_;
  double dropout_ = 0.0;
};

class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(ParameterStore& store, const std::string& name, const BlockShape& shape, std::size_t blocks,
                     Rng& rng);
  Var forward(Graph& g, Var x, const AttentionLayout& layout, const ForwardContext& ctx) const;
  const std::vector<EncoderBlock>& blocks() const { return blocks_; }

 private:
  std::vector<EncoderBlock> blocks_;
};

class TransformerDecoder {
 public:
  TransformerDecoder() = default;
  TransformerDecoder(ParameterStore& store, const std::string& name, const BlockShape& shape, std::size_t blocks,
                     Rng& rng);
  Var forward(Graph& g, Var queries, Var memory, const AttentionLayout& self_layout,
              const AttentionLayout& cross_layout, const ForwardContext& ctx) const;

 private:
  std::vector<DecoderBlock> blocks_;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, const ConvGeometry& geo, Rng& rng);
  Var operator()(Graph& g, Var x) const;
  const ConvGeometry& geometry() const { return geo_; }

 private:
  ParamId w_ = 0, b_ = 0;
  ConvGeometry geo_;
};

}  // namespace ayce::nn
