#include "ayce/data/sampling.hpp"

#include <algorithm>
#include <numeric>

namespace ayce::data {

std::vector<std::size_t> subsample_frames(std::size_t n_frames, std::size_t cap, Rng& rng) {
  std::vector<std::size_t> idx(n_frames);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n_frames <= cap) return idx;
  // Partial Fisher-Yates: the first `cap` slots become a uniform sample.
  for (std::size_t i = 0; i < cap; ++i) {
    const std::size_t j = i + uniform_index(rng, n_frames - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace ayce::data
