#include "ayce/kernels/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <limits>

namespace ayce::kernels {

namespace {

std::atomic<bool> g_parallel{true};

// One output row of op(A) * op(B). Accumulation over p runs in increasing
// order for every (Trans, Trans) combination.
inline void gemm_row(Trans ta, Trans tb, std::size_t i, std::size_t m, std::size_t n,
                     std::size_t k, const double* a, const double* b, double* c) {
  double* ci = c + i * n;
  if (tb == Trans::No) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ta == Trans::No ? a[i * k + p] : a[p * m + i];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      if (ta == Trans::No) {
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      } else {
        for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * bj[p];
      }
      ci[j] += s;
    }
  }
}

}  // namespace

void set_parallel(bool enabled) { g_parallel = enabled; }
bool parallel_enabled() { return g_parallel; }

void gemm_serial(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
                 std::span<const double> a, std::span<const double> b, std::span<double> c,
                 bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m * n), 0.0);
  for (std::size_t i = 0; i < m; ++i) gemm_row(ta, tb, i, m, n, k, a.data(), b.data(), c.data());
}

void gemm_omp(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
              std::span<const double> a, std::span<const double> b, std::span<double> c,
              bool accumulate) {
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    if (!accumulate) std::fill(cp + i * n, cp + (i + 1) * n, 0.0);
    gemm_row(ta, tb, static_cast<std::size_t>(i), m, n, k, ap, bp, cp);
  }
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate) {
  constexpr std::size_t kParallelWork = 1u << 18;
  if (g_parallel && m > 1 && m * n * k >= kParallelWork)
    gemm_omp(ta, tb, m, n, k, a, b, c, accumulate);
  else
    gemm_serial(ta, tb, m, n, k, a, b, c, accumulate);
}

void pairwise_serial(Distance kind, std::span<const double> x, std::size_t nx,
                     std::span<const double> y, std::size_t ny, std::size_t d, std::span<double> out) {
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j)
      out[i * ny + j] = distance(kind, x.subspan(i * d, d), y.subspan(j * d, d));
}

void pairwise_omp(Distance kind, std::span<const double> x, std::size_t nx,
                  std::span<const double> y, std::size_t ny, std::size_t d, std::span<double> out) {
  const auto rows = static_cast<std::ptrdiff_t>(nx);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < ny; ++j)
      out[ui * ny + j] = distance(kind, x.subspan(ui * d, d), y.subspan(j * d, d));
  }
}

namespace {

inline double min_set(Distance kind, std::span<const double> x, std::size_t i, std::size_t ax,
                      std::span<const double> y, std::size_t j, std::size_t ay, std::size_t d) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < ax; ++r)
    for (std::size_t s = 0; s < ay; ++s)
      best = std::min(best, distance(kind, x.subspan((i * ax + r) * d, d), y.subspan((j * ay + s) * d, d)));
  return best;
}

}  // namespace

void min_set_distance_serial(Distance kind, std::span<const double> x, std::size_t nx_sets,
                             std::size_t arity_x, std::span<const double> y, std::size_t ny_sets,
                             std::size_t arity_y, std::size_t d, std::span<double> out) {
  for (std::size_t i = 0; i < nx_sets; ++i)
    for (std::size_t j = 0; j < ny_sets; ++j)
      out[i * ny_sets + j] = min_set(kind, x, i, arity_x, y, j, arity_y, d);
}

void min_set_distance_omp(Distance kind, std::span<const double> x, std::size_t nx_sets,
                          std::size_t arity_x, std::span<const double> y, std::size_t ny_sets,
                          std::size_t arity_y, std::size_t d, std::span<double> out) {
  const auto rows = static_cast<std::ptrdiff_t>(nx_sets);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < ny_sets; ++j)
      out[ui * ny_sets + j] = min_set(kind, x, ui, arity_x, y, j, arity_y, d);
  }
}

}  // namespace ayce::kernels
