#include "ayce/nn/layers.hpp"

#include <cmath>

#include "ayce/core/errors.hpp"

namespace ayce::nn {

Matrix fan_in_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (double& v : m.data) v = uniform(rng, -bound, bound);
  return m;
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : in_(in), out_(out) {
  w_ = store.add(name + ".weight", fan_in_uniform(in, out, in, rng));
  b_ = store.add(name + ".bias", fan_in_uniform(1, out, in, rng));
}

Var Linear::operator()(Graph& g, Var x) const { return linear(g, x, g.param(w_), g.param(b_)); }

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t width) {
  gamma_ = store.add(name + ".gamma", Matrix(1, width, 1.0));
  beta_ = store.add(name + ".beta", Matrix(1, width, 0.0));
}

Var LayerNorm::operator()(Graph& g, Var x) const { return layer_norm(g, x, g.param(gamma_), g.param(beta_)); }

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t d_model,
                                       std::size_t heads, Rng& rng)
    : heads_(heads) {
  if (heads == 0 || d_model % heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) + " heads");
  wq_ = Linear(store, name + ".q", d_model, d_model, rng);
  wk_ = Linear(store, name + ".k", d_model, d_model, rng);
  wv_ = Linear(store, name + ".v", d_model, d_model, rng);
  wo_ = Linear(store, name + ".o", d_model, d_model, rng);
}

Var MultiHeadAttention::forward(Graph& g, Var queries, Var keys_values, const AttentionLayout& layout,
                                std::vector<double>* probs_out) const {
  const Var q = wq_(g, queries);
  const Var k = wk_(g, keys_values);
  const Var v = wv_(g, keys_values);
  return wo_(g, attention(g, q, k, v, heads_, layout, probs_out));
}

EncoderBlock::EncoderBlock(ParameterStore& store, const std::string& name, const BlockShape& shape, Rng& rng)
    : dropout_(shape.dropout) {
  attn_ = MultiHeadAttention(store, name + ".attn", shape.d_model, shape.heads, rng);
  ln1_ = LayerNorm(store, name + ".ln1", shape.d_model);
  ff1_ = Linear(store, name + ".ff1", shape.d_model, shape.d_ff, rng);
  ff2_ = Linear(store, name + ".ff2", shape.d_ff, shape.d_model, rng);
  ln2_ = LayerNorm(store, name + ".ln2", shape.d_model);
}

Var EncoderBlock::forward(Graph& g, Var x, const AttentionLayout& self_layout, const ForwardContext& ctx,
                          std::vector<double>* probs_out) const {
  const double p = ctx.dropout(dropout_);
  Var a = dropout(g, attn_.forward(g, x, x, self_layout, probs_out), p, ctx.rng);
  x = ln1_(g, add(g, x, a));
  Var f = dropout(g, ff2_(g, relu(g, ff1_(g, x))), p, ctx.rng);
  return ln2_(g, add(g, x, f));
}

DecoderBlock::DecoderBlock(ParameterStore& store, const std::string& name, const BlockShape& shape, Rng& rng)
    : dropout_(shape.dropout) {
  self_attn_ = MultiHeadAttention(store, name + ".self_attn", shape.d_model, shape.heads, rng);
  ln1_ = LayerNorm(store, name + ".ln1", shape.d_model);
  cross_attn_ = MultiHeadAttention(store, name + ".cross_attn", shape.d_model, shape.heads, rng);
  ln2_ = LayerNorm(store, name + ".ln2", shape.d_model);
  ff1_ = Linear(store, name + ".ff1", shape.d_model, shape.d_ff, rng);
  ff2_ = Linear(store, name + ".ff2", shape.d_ff, shape.d_model, rng);
  ln3_ = LayerNorm(store, name + ".ln3", shape.d_model);
}

Var DecoderBlock::forward(Graph& g, Var x, Var memory, const AttentionLayout& self_layout,
                          const AttentionLayout& cross_layout, const ForwardContext& ctx) const {
  const double p = ctx.dropout(dropout_);
  Var a = dropout(g, self_attn_.forward(g, x, x, self_layout), p, ctx.rng);
  x = ln1_(g, add(g, x, a));
  Var c = dropout(g, cross_attn_.forward(g, x, memory, cross_layout), p, ctx.rng);
  x = ln2_(g, add(g, x, c));
  Var f = dropout(g, ff2_(g, relu(g, ff1_(g, x))), p, ctx.rng);
  return ln3_(g, add(g, x, f));
}

TransformerEncoder::TransformerEncoder(ParameterStore& store, const std::string& name, const BlockShape& shape,
                                       std::size_t blocks, Rng& rng) {
  for (std::size_t i = 0; i < blocks; ++i)
    blocks_.emplace_back(store, name + ".block" + std::to_string(i), shape, rng);
}

Var TransformerEncoder::forward(Graph& g, Var x, const AttentionLayout& layout, const ForwardContext& ctx) const {
  for (const auto& b : blocks_) x = b.forward(g, x, layout, ctx);
  return x;
}

TransformerDecoder::TransformerDecoder(ParameterStore& store, const std::string& name, const BlockShape& shape,
                                       std::size_t blocks, Rng& rng) {
  for (std::size_t i = 0; i < blocks; ++i)
    blocks_.emplace_back(store, name + ".block" + std::to_string(i), shape, rng);
}

Var TransformerDecoder::forward(Graph& g, Var queries, Var memory, const AttentionLayout& self_layout,
                                const AttentionLayout& cross_layout, const ForwardContext& ctx) const {
  for (const auto& b : blocks_) queries = b.forward(g, queries, memory, self_layout, cross_layout, ctx);
  return queries;
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, const ConvGeometry& geo, Rng& rng) : geo_(geo) {
  const std::size_t fan_in = geo.in_channels * geo.kernel * geo.kernel;
  w_ = store.add(name + ".weight", fan_in_uniform(geo.out_channels, fan_in, fan_in, rng));
  b_ = store.add(name + ".bias", fan_in_uniform(1, geo.out_channels, fan_in, rng));
}

Var Conv2d::operator()(Graph& g, Var x) const { return conv2d(g, x, g.param(w_), g.param(b_), geo_); }

}  // namespace ayce::nn
