#pragma once

#include <cstddef>
#include <vector>

#include "ayce/core/rng.hpp"

namespace ayce::data {

inline constexpr std::size_t kDefaultFrameCap = 80;

/// All indices when n_frames <= cap; otherwise `cap` distinct indices drawn
/// uniformly without replacement, sorted ascending.
std::vector<std::size_t> subsample_frames(std::size_t n_frames, std::size_t cap, Rng& rng);

}  // namespace ayce::data
