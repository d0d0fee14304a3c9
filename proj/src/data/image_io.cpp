#include "pseg/data/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

#include "pseg/error.hpp"

namespace pseg::data {

namespace {

std::vector<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format, std::size_t& height,
                                   std::size_t& width) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  height = image.height;
  width = image.width;
  return buffer;
}

void write_png(const std::filesystem::path& path, png_uint_32 format, std::size_t height, std::size_t width,
               const std::uint8_t* data) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace

RgbImage read_png_rgb(const std::filesystem::path& path) {
  RgbImage img;
  img.pixels = read_png(path, PNG_FORMAT_RGB, img.height, img.width);
  return img;
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image) {
  if (image.pixels.size() != image.height * image.width * 3) throw ShapeError("RGB buffer size mismatch for " + path.string());
  write_png(path, PNG_FORMAT_RGB, image.height, image.width, image.pixels.data());
}

TissueMask read_png_mask(const std::filesystem::path& path) {
  TissueMask mask;
  mask.labels = read_png(path, PNG_FORMAT_GRAY, mask.height, mask.width);
  mask.validate();
  return mask;
}

void write_png_gray(const std::filesystem::path& path, std::size_t height, std::size_t width,
                    const std::vector<std::uint8_t>& values) {
  if (values.size() != height * width) throw ShapeError("gray buffer size mismatch for " + path.string());
  write_png(path, PNG_FORMAT_GRAY, height, width, values.data());
}

void write_png_mask(const std::filesystem::path& path, const TissueMask& mask) {
  write_png_gray(path, mask.height, mask.width, mask.labels);
}

diff::Tensor<float> to_tensor(const RgbImage& image) {
  const std::size_t plane = image.height * image.width;
  std::vector<float> v(3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) v[c * plane + i] = static_cast<float>(image.pixels[i * 3 + c]) / 255.0f;
  return diff::Tensor<float>::from({3, image.height, image.width}, std::move(v));
}

RgbImage to_rgb(const diff::Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("to_rgb expects a 3×H×W tensor");
  RgbImage out{image.dim(1), image.dim(2), {}};
  const std::size_t plane = out.height * out.width;
  out.pixels.resize(plane * 3);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(image[c * plane + i], 0.0f, 1.0f);
      out.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  return out;
}

}  // namespace pseg::data
