#pragma once

#include <cstdint>

#include "pseg/data/dataset.hpp"
#include "pseg/data/mask.hpp"
#include "pseg/diff/tensor.hpp"

namespace pseg::data {

// Probabilities are per-sample activation chances. Magnitudes are in image
// units (pixel values in [0, 1], shifts as a fraction of the side length).
struct AugmentConfig {
  double hflip = 0.5;
  double vflip = 0.5;
  double rot90 = 0.5;
  double shift_scale = 0.3;
  double shift_limit = 0.0625;
  double scale_limit = 0.1;

  double rgb_shift = 0.3;
  double rgb_shift_limit = 0.05;
  double hsv = 0.3;
  double hue_shift_limit = 0.02;  // fraction of a full hue turn
  double sat_shift_limit = 0.1;
  double val_shift_limit = 0.1;
  double brightness_contrast = 0.3;
  double brightness_limit = 0.1;
  double contrast_limit = 0.1;
  double blur = 0.1;
  double blur_sigma_max = 1.0;
  double sharpen = 0.1;
  double jpeg = 0.0;  // off unless asked for
  int jpeg_quality_min = 70;
  int jpeg_quality_max = 95;

  static AugmentConfig disabled();
  void validate() const;
};

// Geometric ops touch image and mask identically; photometric ops touch the
// image only. Fully determined by (sample, seed, config).
Sample augment(const Sample& sample, std::uint64_t seed, const AugmentConfig& config);

// Geometric primitives on C×H×W tensors and label rasters.
diff::Tensor<float> flip_horizontal(const diff::Tensor<float>& x);
diff::Tensor<float> flip_vertical(const diff::Tensor<float>& x);
diff::Tensor<float> rotate90(const diff::Tensor<float>& x, int quarter_turns);  // counter-clockwise
TissueMask flip_horizontal(const TissueMask& m);
TissueMask flip_vertical(const TissueMask& m);
TissueMask rotate90(const TissueMask& m, int quarter_turns);

// Emulates compression by 8×8 DCT quantization at the given quality (1..100).
diff::Tensor<float> jpeg_roundtrip(const diff::Tensor<float>& image, int quality);

}  // namespace pseg::data
