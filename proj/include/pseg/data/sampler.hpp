#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "pseg/data/mask.hpp"

namespace pseg::data {

struct SamplerWeights {
  std::vector<double> probabilities;  // positive, sums to 1
  // Inverse global pixel frequency per foreground class, scaled so the most
  // common foreground class has boost 1. Zero for classes that never occur.
  std::array<double, kNumForegroundClasses> rare_boost{};
};

// weight_i ∝ 1 + Σ_c boost_c · frac_i(c). A dataset with no foreground pixels
// gets uniform weights.
SamplerWeights compute_sampler_weights(const std::vector<TissueMask>& masks);

// One epoch worth of sample indices. With weights: `count` draws with
// replacement. Without: a shuffled permutation of 0..count-1.
std::vector<std::size_t> draw_weighted(const SamplerWeights& weights, std::size_t count, std::uint64_t seed);
std::vector<std::size_t> shuffled_indices(std::size_t count, std::uint64_t seed);

}  // namespace pseg::data
