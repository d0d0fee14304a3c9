#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "pseg/data/mask.hpp"
#include "pseg/diff/tensor.hpp"

namespace pseg::data {

struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major
};

// Any PNG colour type is converted to 8-bit RGB.
RgbImage read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);

// Single-channel 8-bit PNG whose pixel values are class labels.
TissueMask read_png_mask(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, std::size_t height, std::size_t width,
                    const std::vector<std::uint8_t>& values);
void write_png_mask(const std::filesystem::path& path, const TissueMask& mask);

// 3×H×W floats in [0, 1].
diff::Tensor<float> to_tensor(const RgbImage& image);
RgbImage to_rgb(const diff::Tensor<float>& image);

}  // namespace pseg::data
