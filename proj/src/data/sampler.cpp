#include "pseg/data/sampler.hpp"

#include <algorithm>
#include <numeric>

#include "pseg/error.hpp"
#include "pseg/rng.hpp"

namespace pseg::data {

SamplerWeights compute_sampler_weights(const std::vector<TissueMask>& masks) {
  if (masks.empty()) throw std::invalid_argument("compute_sampler_weights: no masks");

  std::array<double, kNumForegroundClasses> global{};
  std::vector<std::array<double, kNumForegroundClasses>> fractions(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    masks[i].validate();
    if (masks[i].size() == 0) throw ShapeError("compute_sampler_weights: empty mask");
    std::array<std::size_t, kNumForegroundClasses + 1> counts{};
    for (auto v : masks[i].labels) ++counts[v];
    const double n = static_cast<double>(masks[i].size());
    for (std::size_t c = 0; c < kNumForegroundClasses; ++c) {
      fractions[i][c] = static_cast<double>(counts[c + 1]) / n;
      global[c] += static_cast<double>(counts[c + 1]);
    }
  }

  SamplerWeights out;
  const double most_common = *std::max_element(global.begin(), global.end());
  if (most_common > 0.0) {
    for (std::size_t c = 0; c < kNumForegroundClasses; ++c) {
      // Ratio of inverse frequencies; the pixel total cancels.
      out.rare_boost[c] = global[c] > 0.0 ? most_common / global[c] : 0.0;
    }
  }

  out.probabilities.resize(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    double w = 1.0;
    for (std::size_t c = 0; c < kNumForegroundClasses; ++c) w += out.rare_boost[c] * fractions[i][c];
    out.probabilities[i] = w;
  }
  const double sum = std::accumulate(out.probabilities.begin(), out.probabilities.end(), 0.0);
  for (auto& p : out.probabilities) p /= sum;
  return out;
}

std::vector<std::size_t> draw_weighted(const SamplerWeights& weights, std::size_t count, std::uint64_t seed) {
  const auto& p = weights.probabilities;
  if (p.empty()) throw std::invalid_argument("draw_weighted: no weights");
  std::vector<double> cumulative(p.size());
  std::partial_sum(p.begin(), p.end(), cumulative.begin());
  Rng rng(seed);
  std::vector<std::size_t> out(count);
  for (auto& idx : out) {
    const double u = rng.uniform() * cumulative.back();
    idx = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    idx = std::min(idx, p.size() - 1);
  }
  return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> out(count);
  std::iota(out.begin(), out.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = count; i > 1; --i) std::swap(out[i - 1], out[rng.below(i)]);
  return out;
}

}  // namespace pseg::data
