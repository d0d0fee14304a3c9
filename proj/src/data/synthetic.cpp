#include "pseg/data/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "pseg/rng.hpp"

namespace pseg::data {

namespace {

using Rgb = std::array<double, 3>;

constexpr std::array<Rgb, 6> kPalette{{
    {0.93, 0.89, 0.93},  // background
    {0.35, 0.15, 0.45},  // tumour
    {0.90, 0.45, 0.60},  // stroma
    {0.55, 0.55, 0.45},  // necrosis
    {0.80, 0.10, 0.15},  // blood vessels
    {0.60, 0.40, 0.85},  // epidermis
}};

struct Canvas {
  std::size_t size;
  TissueMask mask;

  template <typename Inside>
  void paint(std::uint8_t label, Inside inside) {
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        if (inside(static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5)) mask.at(y, x) = label;
  }

  void ellipse(std::uint8_t label, Rng& rng, double rmin, double rmax) {
    const double s = static_cast<double>(size);
    const double cy = rng.uniform(0.2, 0.8) * s, cx = rng.uniform(0.2, 0.8) * s;
    const double ry = rng.uniform(rmin, rmax) * s, rx = rng.uniform(rmin, rmax) * s;
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double c = std::cos(theta), sn = std::sin(theta);
    paint(label, [=](double y, double x) {
      const double u = (x - cx) * c + (y - cy) * sn, v = -(x - cx) * sn + (y - cy) * c;
      return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
    });
  }
};

Sample render(std::size_t index, const SyntheticConfig& config) {
  Rng rng(derive_seed(config.seed, "synthetic", index));
  const std::size_t n = config.size;
  const double s = static_cast<double>(n);
  Canvas canvas{n, TissueMask::filled(n, n)};

  // Stroma: a wide band through the image at a random angle.
  {
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double oy = rng.uniform(0.35, 0.65) * s, ox = rng.uniform(0.35, 0.65) * s;
    const double half = rng.uniform(0.12, 0.2) * s;
    const double ny = std::cos(theta), nx = -std::sin(theta);
    canvas.paint(2, [=](double y, double x) { return std::abs((y - oy) * ny + (x - ox) * nx) <= half; });
  }
  // Epidermis: a strip along one edge.
  {
    const auto edge = rng.below(4);
    const double depth = rng.uniform(0.1, 0.16) * s;
    canvas.paint(5, [=](double y, double x) {
      switch (edge) {
        case 0: return y <= depth;
        case 1: return y >= s - depth;
        case 2: return x <= depth;
        default: return x >= s - depth;
      }
    });
  }
  canvas.ellipse(1, rng, 0.12, 0.22);
  canvas.ellipse(3, rng, 0.08, 0.14);
  canvas.ellipse(4, rng, 0.06, 0.1);

  // Per-image stain jitter plus per-pixel noise.
  std::array<Rgb, 6> palette = kPalette;
  for (auto& colour : palette)
    for (auto& v : colour) v = std::clamp(v + rng.uniform(-0.03, 0.03), 0.0, 1.0);
  const std::size_t plane = n * n;
  std::vector<float> pixels(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const Rgb& colour = palette[canvas.mask.labels[i]];
    for (std::size_t c = 0; c < 3; ++c) {
      pixels[c * plane + i] = static_cast<float>(std::clamp(colour[c] + 0.04 * rng.normal(), 0.0, 1.0));
    }
  }

  char id[32];
  std::snprintf(id, sizeof id, "synth_%03zu", index);
  Sample sample;
  sample.id = id;
  sample.cohort = Cohort::Synthetic;
  sample.mask = std::move(canvas.mask);
  sample.image = diff::Tensor<float>::from({3, n, n}, std::move(pixels));
  // PNG storage quantizes to 8 bits; do it here so in-memory and on-disk agree.
  for (auto& v : sample.image.mutable_data()) v = std::round(v * 255.0f) / 255.0f;
  return sample;
}

}  // namespace

std::vector<Sample> generate_synthetic(const SyntheticConfig& config) {
  if (config.size < 16) throw std::invalid_argument("synthetic images must be at least 16 pixels wide");
  std::vector<Sample> out;
  out.reserve(config.count);
  for (std::size_t i = 0; i < config.count; ++i) out.push_back(render(i, config));
  return out;
}

std::vector<Sample> make_synthetic(const std::filesystem::path& root, const SyntheticConfig& config) {
  auto samples = generate_synthetic(config);
  write_dataset(root, samples);
  return samples;
}

}  // namespace pseg::data
