#include "ayce/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ayce/core/errors.hpp"
#include "ayce/kernels/kernels.hpp"

namespace ayce::nn {

using kernels::Trans;

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                     " vs " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
}

void axpy(std::vector<double>& dst, const std::vector<double>& src, double s = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

}  // namespace

Var add(Graph& g, Var a, Var b) {
  const Matrix& av = g.value(a);
  const Matrix& bv = g.value(b);
  require_same_shape(av, bv, "add");
  Matrix out = av;
  axpy(out.data, bv.data);
  return g.record(std::move(out), {a, b}, [a, b](Graph& g, const Matrix& d) {
    if (g.requires_grad(a)) axpy(g.grad(a).data, d.data);
    if (g.requires_grad(b)) axpy(g.grad(b).data, d.data);
  });
}

Var sub(Graph& g, Var a, Var b) {
  const Matrix& av = g.value(a);
  const Matrix& bv = g.value(b);
  require_same_shape(av, bv, "sub");
  Matrix out = av;
  axpy(out.data, bv.data, -1.0);
  return g.record(std::move(out), {a, b}, [a, b](Graph& g, const Matrix& d) {
    if (g.requires_grad(a)) axpy(g.grad(a).data, d.data);
    if (g.requires_grad(b)) axpy(g.grad(b).data, d.data, -1.0);
  });
}

Var scale(Graph& g, Var a, double s) {
  Matrix out = g.value(a);
  for (double& x : out.data) x *= s;
  return g.record(std::move(out), {a}, [a, s](Graph& g, const Matrix& d) { axpy(g.grad(a).data, d.data, s); });
}

Var add_scalar(Graph& g, Var a, double c) {
  Matrix out = g.value(a);
  for (double& x : out.data) x += c;
  return g.record(std::move(out), {a}, [a](Graph& g, const Matrix& d) { axpy(g.grad(a).data, d.data); });
}

Var add_constant(Graph& g, Var a, const Matrix& c) {
  require_same_shape(g.value(a), c, "add_constant");
  Matrix out = g.value(a);
  axpy(out.data, c.data);
  return g.record(std::move(out), {a}, [a](Graph& g, const Matrix& d) { axpy(g.grad(a).data, d.data); });
}

Var matmul(Graph& g, Var a, Var b) {
  const Matrix& av = g.value(a);
  const Matrix& bv = g.value(b);
  if (av.cols != bv.rows) throw ShapeError("matmul: inner dimensions differ");
  const std::size_t m = av.rows, k = av.cols, n = bv.cols;
  Matrix out(m, n);
  kernels::gemm(Trans::No, Trans::No, m, n, k, av.data, bv.data, out.data, false);
  return g.record(std::move(out), {a, b}, [a, b, m, n, k](Graph& g, const Matrix& d) {
    if (g.requires_grad(a))
      kernels::gemm(Trans::No, Trans::Yes, m, k, n, d.data, g.value(b).data, g.grad(a).data, true);
    if (g.requires_grad(b))
      kernels::gemm(Trans::Yes, Trans::No, k, n, m, g.value(a).data, d.data, g.grad(b).data, true);
  });
}

Var linear(Graph& g, Var x, Var w, Var b) {
  const Matrix& xv = g.value(x);
  const Matrix& wv = g.value(w);
  const Matrix& bv = g.value(b);
  if (xv.cols != wv.rows || bv.rows != 1 || bv.cols != wv.cols)
    throw ShapeError("linear: input width " + std::to_string(xv.cols) + " vs weight " + std::to_string(wv.rows) +
                     "x" + std::to_string(wv.cols));
  const std::size_t m = xv.rows, k = xv.cols, n = wv.cols;
  Matrix out(m, n);
  for (std::size_t i = 0; i < m; ++i) std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + i * n);
  kernels::gemm(Trans::No, Trans::No, m, n, k, xv.data, wv.data, out.data, true);
  return g.record(std::move(out), {x, w, b}, [x, w, b, m, n, k](Graph& g, const Matrix& d) {
    if (g.requires_grad(x))
      kernels::gemm(Trans::No, Trans::Yes, m, k, n, d.data, g.value(w).data, g.grad(x).data, true);
    if (g.requires_grad(w))
      kernels::gemm(Trans::Yes, Trans::No, k, n, m, g.value(x).data, d.data, g.grad(w).data, true);
    if (g.requires_grad(b)) {
      auto& gb = g.grad(b).data;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += d.data[i * n + j];
    }
  });
}

Var relu(Graph& g, Var x) {
  Matrix out = g.value(x);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return g.record(std::move(out), {x}, [x](Graph& g, const Matrix& d) {
    const auto& xv = g.value(x).data;
    auto& gx = g.grad(x).data;
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xv[i] > 0.0) gx[i] += d.data[i];
  });
}

Var tanh(Graph& g, Var x) {
  Matrix out = g.value(x);
  for (double& v : out.data) v = std::tanh(v);
  Matrix y = out;
  return g.record(std::move(out), {x}, [x, y = std::move(y)](Graph& g, const Matrix& d) {
    auto& gx = g.grad(x).data;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += d.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Var dropout(Graph& g, Var x, double p, Rng* rng) {
  if (p <= 0.0 || rng == nullptr) return x;
  const Matrix& xv = g.value(x);
  std::vector<double> keep(xv.size());
  std::bernoulli_distribution coin(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  for (double& k : keep) k = coin(*rng) ? s : 0.0;
  Matrix out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= keep[i];
  return g.record(std::move(out), {x}, [x, keep = std::move(keep)](Graph& g, const Matrix& d) {
    auto& gx = g.grad(x).data;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += d.data[i] * keep[i];
  });
}

Var layer_norm(Graph& g, Var x, Var gamma, Var beta, double eps) {
  const Matrix& xv = g.value(x);
  const Matrix& gv = g.value(gamma);
  const Matrix& bv = g.value(beta);
  const std::size_t rows = xv.rows, n = xv.cols;
  if (gv.size() != n || bv.size() != n) throw ShapeError("layer_norm: affine width mismatch");
  Matrix xhat(rows, n);
  std::vector<double> inv_std(rows);
  Matrix out(rows, n);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto xr = xv.row(r);
    double mu = 0.0;
    for (double v : xr) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xr) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat(r, j) = (xr[j] - mu) * inv_std[r];
      out(r, j) = gv.data[j] * xhat(r, j) + bv.data[j];
    }
  }
  return g.record(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                      Graph& g, const Matrix& d) {
                    const auto& gam = g.value(gamma).data;
                    if (g.requires_grad(gamma)) {
                      auto& gg = g.grad(gamma).data;
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < n; ++j) gg[j] += d(r, j) * xhat(r, j);
                    }
                    if (g.requires_grad(beta)) {
                      auto& gb = g.grad(beta).data;
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < n; ++j) gb[j] += d(r, j);
                    }
                    if (!g.requires_grad(x)) return;
                    Matrix& gx = g.grad(x);
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double dxh = d(r, j) * gam[j];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xhat(r, j);
                      }
                      for (std::size_t j = 0; j < n; ++j) {
                        const double dxh = d(r, j) * gam[j];
                        gx(r, j) += inv_std[r] * inv_n *
                                    (static_cast<double>(n) * dxh - sum_dxhat - xhat(r, j) * sum_dxhat_xhat);
                      }
                    }
                  });
}

Var attention(Graph& g, Var q, Var k, Var v, std::size_t heads, const AttentionLayout& layout,
              std::vector<double>* probs_out) {
  const Matrix& qv = g.value(q);
  const Matrix& kv = g.value(k);
  const Matrix& vv = g.value(v);
  const std::size_t d = qv.cols;
  const std::size_t G = layout.groups, sq = layout.q_per_group, sk = layout.k_per_group;
  if (kv.cols != d || vv.cols != d || heads == 0 || d % heads != 0) throw ShapeError("attention: width/head mismatch");
  if (qv.rows != G * sq || kv.rows != G * sk || vv.rows != G * sk) throw ShapeError("attention: layout does not match rows");
  if (!layout.key_mask.empty() && layout.key_mask.size() != kv.rows) throw ShapeError("attention: key mask length");
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  auto valid = [&](std::size_t key_row) { return layout.key_mask.empty() || layout.key_mask[key_row] != 0; };

  std::vector<double> probs(G * heads * sq * sk, 0.0);
  Matrix out(qv.rows, d);
  std::vector<double> scores(sk);
  for (std::size_t grp = 0; grp < G; ++grp) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < sq; ++i) {
        const double* qi = &qv(grp * sq + i, off);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < sk; ++j) {
          if (!valid(grp * sk + j)) continue;
          const double* kj = &kv(grp * sk + j, off);
          double s = 0.0;
          for (std::size_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
          scores[j] = s * inv_sqrt;
          mx = std::max(mx, scores[j]);
        }
        if (mx == -std::numeric_limits<double>::infinity()) continue;
        double* p = &probs[((grp * heads + h) * sq + i) * sk];
        double z = 0.0;
        for (std::size_t j = 0; j < sk; ++j) {
          if (!valid(grp * sk + j)) continue;
          p[j] = std::exp(scores[j] - mx);
          z += p[j];
        }
        double* oi = &out(grp * sq + i, off);
        for (std::size_t j = 0; j < sk; ++j) {
          if (p[j] == 0.0) continue;
          p[j] /= z;
          const double* vj = &vv(grp * sk + j, off);
          for (std::size_t t = 0; t < dh; ++t) oi[t] += p[j] * vj[t];
        }
      }
    }
  }
  if (probs_out) *probs_out = probs;

  return g.record(
      std::move(out), {q, k, v},
      [q, k, v, G, sq, sk, heads, dh, inv_sqrt, probs = std::move(probs)](Graph& g, const Matrix& dout) {
        const Matrix& qv = g.value(q);
        const Matrix& kv = g.value(k);
        const Matrix& vv = g.value(v);
        const bool need_q = g.requires_grad(q), need_k = g.requires_grad(k), need_v = g.requires_grad(v);
        Matrix* gq = need_q ? &g.grad(q) : nullptr;
        Matrix* gk = need_k ? &g.grad(k) : nullptr;
        Matrix* gv = need_v ? &g.grad(v) : nullptr;
        std::vector<double> dp(sk);
        for (std::size_t grp = 0; grp < G; ++grp) {
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dh;
            for (std::size_t i = 0; i < sq; ++i) {
              const double* p = &probs[((grp * heads + h) * sq + i) * sk];
              const double* doi = &dout(grp * sq + i, off);
              double dot_pdp = 0.0;
              for (std::size_t j = 0; j < sk; ++j) {
                if (p[j] == 0.0) {
                  dp[j] = 0.0;
                  continue;
                }
                const double* vj = &vv(grp * sk + j, off);
                double s = 0.0;
                for (std::size_t t = 0; t < dh; ++t) s += doi[t] * vj[t];
                dp[j] = s;
                dot_pdp += p[j] * s;
                if (gv) {
                  double* gvj = &(*gv)(grp * sk + j, off);
                  for (std::size_t t = 0; t < dh; ++t) gvj[t] += p[j] * doi[t];
                }
              }
              if (!gq && !gk) continue;
              const double* qi = &qv(grp * sq + i, off);
              for (std::size_t j = 0; j < sk; ++j) {
                if (p[j] == 0.0) continue;
                const double ds = p[j] * (dp[j] - dot_pdp) * inv_sqrt;
                const double* kj = &kv(grp * sk + j, off);
                if (gq) {
                  double* gqi = &(*gq)(grp * sq + i, off);
                  for (std::size_t t = 0; t < dh; ++t) gqi[t] += ds * kj[t];
                }
                if (gk) {
                  double* gkj = &(*gk)(grp * sk + j, off);
                  for (std::size_t t = 0; t < dh; ++t) gkj[t] += ds * qi[t];
                }
              }
            }
          }
        }
      });
}

Var group_mean(Graph& g, Var x, std::size_t group_size, std::span<const std::uint8_t> row_mask) {
  const Matrix& xv = g.value(x);
  if (group_size == 0 || xv.rows % group_size != 0) throw ShapeError("group_mean: rows not divisible by group size");
  if (!row_mask.empty() && row_mask.size() != xv.rows) throw ShapeError("group_mean: mask length");
  const std::size_t groups = xv.rows / group_size, n = xv.cols;
  std::vector<double> weight(xv.rows, 0.0);
  Matrix out(groups, n);
  for (std::size_t grp = 0; grp < groups; ++grp) {
    std::size_t count = 0;
    for (std::size_t r = 0; r < group_size; ++r) count += row_mask.empty() || row_mask[grp * group_size + r];
    if (count == 0) continue;
    const double w = 1.0 / static_cast<double>(count);
    for (std::size_t r = 0; r < group_size; ++r) {
      const std::size_t row = grp * group_size + r;
      if (!row_mask.empty() && !row_mask[row]) continue;
      weight[row] = w;
      for (std::size_t j = 0; j < n; ++j) out(grp, j) += w * xv(row, j);
    }
  }
  return g.record(std::move(out), {x}, [x, group_size, n, weight = std::move(weight)](Graph& g, const Matrix& d) {
    Matrix& gx = g.grad(x);
    for (std::size_t row = 0; row < weight.size(); ++row) {
      if (weight[row] == 0.0) continue;
      const std::size_t grp = row / group_size;
      for (std::size_t j = 0; j < n; ++j) gx(row, j) += weight[row] * d(grp, j);
    }
  });
}

Var place(Graph& g, Matrix base, Var src, std::span<const std::size_t> rows, std::size_t col_offset) {
  const Matrix& sv = g.value(src);
  if (sv.rows != rows.size() || col_offset + sv.cols > base.cols) throw ShapeError("place: source does not fit");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= base.rows) throw ShapeError("place: row index out of range");
    std::copy(sv.row(i).begin(), sv.row(i).end(), base.row(rows[i]).begin() + static_cast<std::ptrdiff_t>(col_offset));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return g.record(std::move(base), {src}, [src, col_offset, idx = std::move(idx)](Graph& g, const Matrix& d) {
    Matrix& gs = g.grad(src);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < gs.cols; ++j) gs(i, j) += d(idx[i], col_offset + j);
  });
}

namespace {

void im2col(const double* img, const ConvGeometry& geo, double* cols) {
  const std::size_t oh = geo.out_height(), ow = geo.out_width(), k = geo.kernel;
  for (std::size_t c = 0; c < geo.in_channels; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const std::size_t row = (c * k + ky) * k + kx;
        double* dst = cols + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * geo.stride + ky) - static_cast<std::ptrdiff_t>(geo.pad);
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * geo.stride + kx) - static_cast<std::ptrdiff_t>(geo.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(geo.height) &&
                                ix < static_cast<std::ptrdiff_t>(geo.width);
            dst[oy * ow + ox] = inside ? img[(c * geo.height + static_cast<std::size_t>(iy)) * geo.width +
                                             static_cast<std::size_t>(ix)]
                                       : 0.0;
          }
        }
      }
}

void col2im(const double* cols, const ConvGeometry& geo, double* img) {
  const std::size_t oh = geo.out_height(), ow = geo.out_width(), k = geo.kernel;
  for (std::size_t c = 0; c < geo.in_channels; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const std::size_t row = (c * k + ky) * k + kx;
        const double* src = cols + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * geo.stride + ky) - static_cast<std::ptrdiff_t>(geo.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(geo.height)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * geo.stride + kx) - static_cast<std::ptrdiff_t>(geo.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(geo.width)) continue;
            img[(c * geo.height + static_cast<std::size_t>(iy)) * geo.width + static_cast<std::size_t>(ix)] +=
                src[oy * ow + ox];
          }
        }
      }
}

}  // namespace

Var conv2d(Graph& g, Var x, Var w, Var b, const ConvGeometry& geo) {
  const Matrix& xv = g.value(x);
  const Matrix& wv = g.value(w);
  const Matrix& bv = g.value(b);
  const std::size_t in_size = geo.in_channels * geo.height * geo.width;
  const std::size_t ckk = geo.in_channels * geo.kernel * geo.kernel;
  const std::size_t spatial = geo.out_height() * geo.out_width();
  if (xv.cols != in_size) throw ShapeError("conv2d: input width does not match geometry");
  if (wv.rows != geo.out_channels || wv.cols != ckk || bv.size() != geo.out_channels)
    throw ShapeError("conv2d: weight shape does not match geometry");
  const std::size_t n = xv.rows;
  std::vector<double> cols(n * ckk * spatial);
  Matrix out(n, geo.out_channels * spatial);
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = cols.data() + i * ckk * spatial;
    im2col(&xv.data[i * in_size], geo, ci);
    double* oi = &out.data[i * geo.out_channels * spatial];
    for (std::size_t c = 0; c < geo.out_channels; ++c) std::fill(oi + c * spatial, oi + (c + 1) * spatial, bv.data[c]);
    kernels::gemm(Trans::No, Trans::No, geo.out_channels, spatial, ckk, wv.data, {ci, ckk * spatial},
                  {oi, geo.out_channels * spatial}, true);
  }
  return g.record(std::move(out), {x, w, b},
                  [x, w, b, geo, n, ckk, spatial, in_size, cols = std::move(cols)](Graph& g, const Matrix& d) {
                    const std::size_t oc = geo.out_channels;
                    if (g.requires_grad(b)) {
                      auto& gb = g.grad(b).data;
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t c = 0; c < oc; ++c) {
                          const double* di = &d.data[(i * oc + c) * spatial];
                          double s = 0.0;
                          for (std::size_t p = 0; p < spatial; ++p) s += di[p];
                          gb[c] += s;
                        }
                    }
                    if (g.requires_grad(w)) {
                      auto& gw = g.grad(w).data;
                      for (std::size_t i = 0; i < n; ++i)
                        kernels::gemm(Trans::No, Trans::Yes, oc, ckk, spatial, {&d.data[i * oc * spatial], oc * spatial},
                                      {cols.data() + i * ckk * spatial, ckk * spatial}, gw, true);
                    }
                    if (g.requires_grad(x)) {
                      auto& gx = g.grad(x).data;
                      std::vector<double> dcols(ckk * spatial);
                      for (std::size_t i = 0; i < n; ++i) {
                        kernels::gemm(Trans::Yes, Trans::No, ckk, spatial, oc, g.value(w).data,
                                      {&d.data[i * oc * spatial], oc * spatial}, dcols, false);
                        col2im(dcols.data(), geo, &gx[i * in_size]);
                      }
                    }
                  });
}

Var distance_matrix(Graph& g, Var a, Var b, metrics::Metric m) {
  const Matrix& av = g.value(a);
  const Matrix& bv = g.value(b);
  if (av.cols != bv.cols) throw DimensionMismatch("distance_matrix: embedding widths differ");
  const std::size_t r = av.rows, c = bv.rows;
  Matrix out(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = metrics::distance(m, av.row(i), bv.row(j));
  Matrix dist = out;
  return g.record(std::move(out), {a, b}, [a, b, m, r, c, dist = std::move(dist)](Graph& g, const Matrix& d) {
    const Matrix& av = g.value(a);
    const Matrix& bv = g.value(b);
    const std::size_t n = av.cols;
    Matrix* ga = g.requires_grad(a) ? &g.grad(a) : nullptr;
    Matrix* gb = g.requires_grad(b) ? &g.grad(b) : nullptr;
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double up = d(i, j);
        if (up == 0.0) continue;
        const auto u = av.row(i);
        const auto v = bv.row(j);
        if (m == metrics::Metric::Euclidean) {
          // Subgradient 0 at coincident points.
          if (dist(i, j) == 0.0) continue;
          const double s = up / dist(i, j);
          for (std::size_t t = 0; t < n; ++t) {
            const double diff = s * (u[t] - v[t]);
            if (ga) (*ga)(i, t) += diff;
            if (gb) (*gb)(j, t) -= diff;
          }
        } else {
          const double uu = kernels::dot(u, u), vv = kernels::dot(v, v), uv = kernels::dot(u, v);
          const double nu = std::sqrt(uu), nv = std::sqrt(vv);
          const double inv = 1.0 / (nu * nv);
          for (std::size_t t = 0; t < n; ++t) {
            if (ga) (*ga)(i, t) -= up * (v[t] * inv - uv * u[t] * inv / uu);
            if (gb) (*gb)(j, t) -= up * (u[t] * inv - uv * v[t] * inv / vv);
          }
        }
      }
    }
  });
}

Var min_all(Graph& g, Var x) {
  const Matrix& xv = g.value(x);
  if (xv.empty()) throw ShapeError("min_all on an empty matrix");
  const auto it = std::min_element(xv.data.begin(), xv.data.end());
  const auto idx = static_cast<std::size_t>(it - xv.data.begin());
  return g.record(Matrix(1, 1, *it), {x}, [x, idx](Graph& g, const Matrix& d) { g.grad(x).data[idx] += d.data[0]; });
}

Var mean_all(Graph& g, Var x) {
  const Matrix& xv = g.value(x);
  if (xv.empty()) throw ShapeError("mean_all on an empty matrix");
  double s = 0.0;
  for (double v : xv.data) s += v;
  const double inv = 1.0 / static_cast<double>(xv.size());
  return g.record(Matrix(1, 1, s * inv), {x}, [x, inv](Graph& g, const Matrix& d) {
    for (double& v : g.grad(x).data) v += d.data[0] * inv;
  });
}

Var sum_all(Graph& g, Var x) {
  double s = 0.0;
  for (double v : g.value(x).data) s += v;
  return g.record(Matrix(1, 1, s), {x}, [x](Graph& g, const Matrix& d) {
    for (double& v : g.grad(x).data) v += d.data[0];
  });
}

Var embed_mean(Graph& g, Var table, std::span<const std::size_t> ids) {
  const Matrix& tv = g.value(table);
  if (ids.empty()) throw ShapeError("embed_mean with no tokens");
  Matrix out(1, tv.cols);
  const double inv = 1.0 / static_cast<double>(ids.size());
  for (std::size_t id : ids) {
    if (id >= tv.rows) throw ShapeError("embed_mean: token id out of range");
    for (std::size_t j = 0; j < tv.cols; ++j) out.data[j] += tv(id, j) * inv;
  }
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return g.record(std::move(out), {table}, [table, inv, idv = std::move(idv)](Graph& g, const Matrix& d) {
    Matrix& gt = g.grad(table);
    for (std::size_t id : idv)
      for (std::size_t j = 0; j < gt.cols; ++j) gt(id, j) += d.data[j] * inv;
  });
}

Var vstack(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("vstack of nothing");
  const std::size_t cols = g.value(parts[0]).cols;
  std::size_t rows = 0;
  for (Var p : parts) {
    if (g.value(p).cols != cols) throw ShapeError("vstack: column mismatch");
    rows += g.value(p).rows;
  }
  Matrix out(rows, cols);
  std::size_t at = 0;
  for (Var p : parts) {
    const auto& pv = g.value(p).data;
    std::copy(pv.begin(), pv.end(), out.data.begin() + static_cast<std::ptrdiff_t>(at));
    at += pv.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record(std::move(out), inputs, [inputs](Graph& g, const Matrix& d) {
    std::size_t at = 0;
    for (Var p : inputs) {
      const std::size_t n = g.value(p).size();
      if (g.requires_grad(p)) {
        auto& gp = g.grad(p).data;
        for (std::size_t i = 0; i < n; ++i) gp[i] += d.data[at + i];
      }
      at += n;
    }
  });
}

}  // namespace ayce::nn
