#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ayce/core/rng.hpp"
#include "ayce/metrics/metrics.hpp"
#include "ayce/nn/graph.hpp"

namespace ayce::nn {

Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
Var add_scalar(Graph& g, Var a, double c);
/// Adds a constant matrix of the same shape (e.g. a positional table).
Var add_constant(Graph& g, Var a, const Matrix& c);

Var matmul(Graph& g, Var a, Var b);
/// x (n x in) * w (in x out) + b (1 x out), bias broadcast over rows.
Var linear(Graph& g, Var x, Var w, Var b);

Var relu(Graph& g, Var x);
Var tanh(Graph& g, Var x);

/// Inverted dropout; identity when p == 0 or rng is null.
Var dropout(Graph& g, Var x, double p, Rng* rng);

/// Row-wise layer normalisation with affine gamma/beta (1 x cols each).
Var layer_norm(Graph& g, Var x, Var gamma, Var beta, double eps = 1e-5);

/// Row partition for batched attention: query rows form `groups` contiguous
/// blocks of `q_per_group`, key/value rows blocks of `k_per_group`; a query
/// only attends to keys of its own block whose mask byte is nonzero. A query
/// block with no valid key produces zero rows.
struct AttentionLayout {
  std::size_t groups = 1;
  std::size_t q_per_group = 0;
  std::size_t k_per_group = 0;
  std::vector<std::uint8_t> key_mask;  // empty means all keys valid
};

/// Multi-head scaled dot-product attention on already-projected q, k, v.
/// When `probs_out` is given it receives the softmax weights laid out as
/// [group][head][query][key].
Var attention(Graph& g, Var q, Var k, Var v, std::size_t heads, const AttentionLayout& layout,
              std::vector<double>* probs_out = nullptr);

/// Mean over the rows of each contiguous block of `group_size` rows, counting
/// only rows whose mask byte is nonzero. Blocks without a valid row give zeros.
Var group_mean(Graph& g, Var x, std::size_t group_size, std::span<const std::uint8_t> row_mask);

/// Copy of `base` with src row i written at (rows[i], col_offset ...).
Var place(Graph& g, Matrix base, Var src, std::span<const std::size_t> rows, std::size_t col_offset);

struct ConvGeometry {
  std::size_t in_channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t pad = 1;

  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

/// 2-D convolution over a batch stored one image per row (C x H x W
/// flattened); weights are out_channels x (C * k * k), bias 1 x out_channels.
Var conv2d(Graph& g, Var x, Var w, Var b, const ConvGeometry& geo);

/// Pairwise metric between the rows of a (r x d) and b (c x d): r x c.
Var distance_matrix(Graph& g, Var a, Var b, metrics::Metric m);

Var min_all(Graph& g, Var x);
Var mean_all(Graph& g, Var x);
Var sum_all(Graph& g, Var x);

/// Mean of the table rows selected by ids, as a 1 x cols row.
Var embed_mean(Graph& g, Var table, std::span<const std::size_t> ids);

Var vstack(Graph& g, std::span<const Var> parts);

}  // namespace ayce::nn
