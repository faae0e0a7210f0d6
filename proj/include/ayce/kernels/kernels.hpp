#pragma once

#include <cmath>
#include <cstddef>
#include <span>

// Hot loops shared by the autograd ops, the metrics and the ranking code.
// Every kernel has a serial reference (`*_serial`) and an OpenMP version
// (`*_omp`). Parallel versions split only the outer (output-row) loop and keep
// the per-element accumulation order, so both produce bit-identical results.

namespace ayce::kernels {

enum class Trans { No, Yes };

/// C[m x n] (+)= op(A) * op(B) where op(A) is m x k and op(B) is k x n.
/// Storage is row-major: A is (m x k) or (k x m) when transposed, B likewise.
void gemm_serial(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
                 std::span<const double> a, std::span<const double> b, std::span<double> c,
                 bool accumulate);
void gemm_omp(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
              std::span<const double> a, std::span<const double> b, std::span<double> c,
              bool accumulate);

/// Dispatches to the OpenMP kernel when the product is large enough and
/// parallel execution is enabled, otherwise to the serial one.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate);

void set_parallel(bool enabled);
bool parallel_enabled();

enum class Distance { Cosine, Euclidean };

inline double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

inline double euclidean_distance(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// 1 - cos(u, v). Caller guarantees both norms are nonzero.
inline double cosine_distance(std::span<const double> u, std::span<const double> v) {
  const double nu = std::sqrt(dot(u, u));
  const double nv = std::sqrt(dot(v, v));
  return 1.0 - dot(u, v) / (nu * nv);
}

inline double distance(Distance kind, std::span<const double> u, std::span<const double> v) {
  return kind == Distance::Cosine ? cosine_distance(u, v) : euclidean_distance(u, v);
}

/// out[i * ny + j] = distance(X_i, Y_j) for row sets X (nx x d) and Y (ny x d).
void pairwise_serial(Distance kind, std::span<const double> x, std::size_t nx,
                     std::span<const double> y, std::size_t ny, std::size_t d, std::span<double> out);
void pairwise_omp(Distance kind, std::span<const double> x, std::size_t nx,
                  std::span<const double> y, std::size_t ny, std::size_t d, std::span<double> out);

/// Set-to-set minimum distance table: sets are `arity_x` / `arity_y`
/// consecutive rows; out[i * ny_sets + j] = min over rows of set i vs set j.
/// This is the all-pairs form of min(distance matrix) used at ranking time.
void min_set_distance_serial(Distance kind, std::span<const double> x, std::size_t nx_sets,
                             std::size_t arity_x, std::span<const double> y, std::size_t ny_sets,
                             std::size_t arity_y, std::size_t d, std::span<double> out);
void min_set_distance_omp(Distance kind, std::span<const double> x, std::size_t nx_sets,
                          std::size_t arity_x, std::span<const double> y, std::size_t ny_sets,
                          std::size_t arity_y, std::size_t d, std::span<double> out);

}  // namespace ayce::kernels
