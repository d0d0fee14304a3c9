#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pseg/train/pipeline.hpp"

namespace pseg::train {

inline constexpr std::size_t kBenchWarmup = 10;

struct BenchReport {
  std::size_t resolution = 0;
  std::size_t warmup = 0;
  std::vector<double> samples;  // seconds per forward, warm-up excluded
  double mean = 0;
  double stddev = 0;  // population

  // "resolution=224 runs=100 warmup=10 mean=0.0774s std=0.0009s"
  std::string summary() const;
};

// Times gradient-free forward passes (PTC, fusion, segnet) on one random
// image and token grid. resolution must be a multiple of 14 whose token grid
// (resolution / 14) the PTC maps back to resolution and which the segnet
// can halve down to its bottleneck.
BenchReport bench(const Pipeline& pipeline, std::size_t resolution = 224, std::size_t runs = 100,
                  std::size_t warmup = kBenchWarmup, std::uint64_t seed = 0);

}  // namespace pseg::train
