#include "pseg/train/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "pseg/error.hpp"
#include "pseg/rng.hpp"

namespace pseg::train {

std::string BenchReport::summary() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "resolution=%zu runs=%zu warmup=%zu mean=%.6fs std=%.6fs", resolution,
                samples.size(), warmup, mean, stddev);
  return buf;
}

BenchReport bench(const Pipeline& pipeline, std::size_t resolution, std::size_t runs, std::size_t warmup,
                  std::uint64_t seed) {
  if (runs == 0) throw std::invalid_argument("bench: runs must be positive");
  const auto& cfg = pipeline.config();
  const std::size_t grid = resolution / 14;
  if (resolution % 14 != 0 || cfg.ptc.output_side_for(grid) != resolution ||
      resolution % (std::size_t{1} << cfg.segnet.depth()) != 0) {
    throw ShapeError("bench: resolution " + std::to_string(resolution) + " is not supported by this model");
  }
  Rng rng(derive_seed(seed, "bench", resolution));
  std::vector<float> g(cfg.ptc.embed_dim * grid * grid), im(3 * resolution * resolution);
  for (auto& v : g) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : im) v = static_cast<float>(rng.uniform());
  const auto grid_t = diff::Tensor<float>::from({cfg.ptc.embed_dim, grid, grid}, std::move(g));
  const auto image = diff::Tensor<float>::from({3, resolution, resolution}, std::move(im));

  diff::NoGradGuard no_grad;
  diff::FlushDenormalsGuard ftz;
  BenchReport r;
  r.resolution = resolution;
  r.warmup = warmup;
  for (std::size_t i = 0; i < warmup + runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = pipeline.forward(grid_t, image);
    const auto t1 = std::chrono::steady_clock::now();
    if (!std::isfinite(out.seg[0])) throw NumericError("bench: non-finite output");
    if (i >= warmup) r.samples.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  const double n = static_cast<double>(r.samples.size());
  r.mean = std::accumulate(r.samples.begin(), r.samples.end(), 0.0) / n;
  double ss = 0;
  for (double s : r.samples) ss += (s - r.mean) * (s - r.mean);
  r.stddev = std::sqrt(ss / n);
  return r;
}

}  // namespace pseg::train
