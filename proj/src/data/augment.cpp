#include "pseg/data/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "pseg/error.hpp"
#include "pseg/rng.hpp"

namespace pseg::data {

using diff::Tensor;

AugmentConfig AugmentConfig::disabled() {
  AugmentConfig c;
  c.hflip = c.vflip = c.rot90 = c.shift_scale = 0.0;
  c.rgb_shift = c.hsv = c.brightness_contrast = c.blur = c.sharpen = c.jpeg = 0.0;
  return c;
}

void AugmentConfig::validate() const {
  for (double p : {hflip, vflip, rot90, shift_scale, rgb_shift, hsv, brightness_contrast, blur, sharpen, jpeg}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("augment probability " + std::to_string(p) + " outside [0, 1]");
  }
  for (double m : {shift_limit, scale_limit, rgb_shift_limit, hue_shift_limit, sat_shift_limit, val_shift_limit,
                   brightness_limit, contrast_limit, blur_sigma_max}) {
    if (!(m >= 0.0)) throw std::invalid_argument("augment magnitudes must be non-negative");
  }
  if (scale_limit >= 1.0) throw std::invalid_argument("augment scale_limit must be below 1");
  if (jpeg_quality_min < 1 || jpeg_quality_max > 100 || jpeg_quality_min > jpeg_quality_max) {
    throw std::invalid_argument("augment jpeg quality range must satisfy 1 <= min <= max <= 100");
  }
}

namespace {

struct Planes {
  std::size_t channels, height, width;
  std::vector<float> values;
  float& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
};

Planes planes_of(const Tensor<float>& t) {
  if (t.rank() != 3) throw ShapeError("expected a C×H×W tensor, got " + diff::to_string(t.shape()));
  return {t.dim(0), t.dim(1), t.dim(2), std::vector<float>(t.data().begin(), t.data().end())};
}

Tensor<float> tensor_of(Planes p) { return Tensor<float>::from({p.channels, p.height, p.width}, std::move(p.values)); }

// out(y, x) = in(src(y, x)) for an index map src.
template <typename Src>
Planes remap(const Planes& in, std::size_t oh, std::size_t ow, Src src) {
  Planes out{in.channels, oh, ow, std::vector<float>(in.channels * oh * ow)};
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      const auto [sy, sx] = src(y, x);
      for (std::size_t c = 0; c < in.channels; ++c) out.at(c, y, x) = in.at(c, sy, sx);
    }
  return out;
}

template <typename Src>
TissueMask remap(const TissueMask& in, std::size_t oh, std::size_t ow, Src src) {
  TissueMask out = TissueMask::filled(oh, ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      const auto [sy, sx] = src(y, x);
      out.at(y, x) = in.at(sy, sx);
    }
  return out;
}

using Index = std::pair<std::size_t, std::size_t>;

int normalize_turns(int k) { return ((k % 4) + 4) % 4; }

template <typename Raster>
Raster rotate_impl(const Raster& in, std::size_t h, std::size_t w, int turns) {
  switch (normalize_turns(turns)) {
    case 1: return remap(in, w, h, [&](std::size_t y, std::size_t x) { return Index{x, w - 1 - y}; });
    case 2: return remap(in, h, w, [&](std::size_t y, std::size_t x) { return Index{h - 1 - y, w - 1 - x}; });
    case 3: return remap(in, w, h, [&](std::size_t y, std::size_t x) { return Index{h - 1 - x, y}; });
    default: return in;
  }
}

// Affine shift-scale about the image centre. Exposed borders take value 0 in
// the image and label 0 in the mask.
struct ShiftScale {
  double scale, ty, tx;  // translation in pixels

  std::pair<double, double> source(std::size_t y, std::size_t x, std::size_t h, std::size_t w) const {
    const double cy = 0.5 * static_cast<double>(h), cx = 0.5 * static_cast<double>(w);
    return {(static_cast<double>(y) + 0.5 - cy - ty) / scale + cy - 0.5,
            (static_cast<double>(x) + 0.5 - cx - tx) / scale + cx - 0.5};
  }
};

Planes apply_shift_scale(const Planes& in, const ShiftScale& t) {
  Planes out{in.channels, in.height, in.width, std::vector<float>(in.values.size(), 0.0f)};
  const double hmax = static_cast<double>(in.height) - 1.0, wmax = static_cast<double>(in.width) - 1.0;
  for (std::size_t y = 0; y < in.height; ++y)
    for (std::size_t x = 0; x < in.width; ++x) {
      const auto [sy, sx] = t.source(y, x, in.height, in.width);
      if (sy < -0.5 || sy > hmax + 0.5 || sx < -0.5 || sx > wmax + 0.5) continue;
      const double cy = std::clamp(sy, 0.0, hmax), cx = std::clamp(sx, 0.0, wmax);
      const auto y0 = static_cast<std::size_t>(std::floor(cy)), x0 = static_cast<std::size_t>(std::floor(cx));
      const std::size_t y1 = std::min(y0 + 1, in.height - 1), x1 = std::min(x0 + 1, in.width - 1);
      const double fy = cy - static_cast<double>(y0), fx = cx - static_cast<double>(x0);
      for (std::size_t c = 0; c < in.channels; ++c) {
        const double top = (1 - fx) * in.at(c, y0, x0) + fx * in.at(c, y0, x1);
        const double bottom = (1 - fx) * in.at(c, y1, x0) + fx * in.at(c, y1, x1);
        out.at(c, y, x) = static_cast<float>((1 - fy) * top + fy * bottom);
      }
    }
  return out;
}

TissueMask apply_shift_scale(const TissueMask& in, const ShiftScale& t) {
  TissueMask out = TissueMask::filled(in.height, in.width);
  const auto h = static_cast<double>(in.height), w = static_cast<double>(in.width);
  for (std::size_t y = 0; y < in.height; ++y)
    for (std::size_t x = 0; x < in.width; ++x) {
      const auto [sy, sx] = t.source(y, x, in.height, in.width);
      const double ry = std::floor(sy + 0.5), rx = std::floor(sx + 0.5);
      if (ry < 0 || ry >= h || rx < 0 || rx >= w) continue;
      out.at(y, x) = in.at(static_cast<std::size_t>(ry), static_cast<std::size_t>(rx));
    }
  return out;
}

void clamp_unit(Planes& p) {
  for (auto& v : p.values) v = std::clamp(v, 0.0f, 1.0f);
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    h = 0.0;
  } else if (mx == r) {
    h = std::fmod((g - b) / d + 6.0, 6.0) / 6.0;
  } else if (mx == g) {
    h = ((b - r) / d + 2.0) / 6.0;
  } else {
    h = ((r - g) / d + 4.0) / 6.0;
  }
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = (h - std::floor(h)) * 6.0;
  const int i = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

// Separable convolution with edge clamping.
Planes convolve_separable(const Planes& in, const std::vector<double>& kernel) {
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  const auto h = static_cast<std::ptrdiff_t>(in.height), w = static_cast<std::ptrdiff_t>(in.width);
  Planes tmp = in, out = in;
  for (std::size_t c = 0; c < in.channels; ++c) {
    for (std::ptrdiff_t y = 0; y < h; ++y)
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
          const auto sx = std::clamp<std::ptrdiff_t>(x + k, 0, w - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * in.at(c, y, sx);
        }
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
    for (std::ptrdiff_t y = 0; y < h; ++y)
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
          const auto sy = std::clamp<std::ptrdiff_t>(y + k, 0, h - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(c, sy, x);
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Baseline luminance quantization table.
constexpr std::array<int, 64> kJpegLuma{16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                                        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                                        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                                        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

}  // namespace

Tensor<float> flip_horizontal(const Tensor<float>& x) {
  const Planes p = planes_of(x);
  return tensor_of(remap(p, p.height, p.width, [&](std::size_t y, std::size_t c) { return Index{y, p.width - 1 - c}; }));
}

Tensor<float> flip_vertical(const Tensor<float>& x) {
  const Planes p = planes_of(x);
  return tensor_of(remap(p, p.height, p.width, [&](std::size_t y, std::size_t c) { return Index{p.height - 1 - y, c}; }));
}

Tensor<float> rotate90(const Tensor<float>& x, int quarter_turns) {
  const Planes p = planes_of(x);
  return tensor_of(rotate_impl(p, p.height, p.width, quarter_turns));
}

TissueMask flip_horizontal(const TissueMask& m) {
  return remap(m, m.height, m.width, [&](std::size_t y, std::size_t x) { return Index{y, m.width - 1 - x}; });
}

TissueMask flip_vertical(const TissueMask& m) {
  return remap(m, m.height, m.width, [&](std::size_t y, std::size_t x) { return Index{m.height - 1 - y, x}; });
}

TissueMask rotate90(const TissueMask& m, int quarter_turns) { return rotate_impl(m, m.height, m.width, quarter_turns); }

Tensor<float> jpeg_roundtrip(const Tensor<float>& image, int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg quality must lie in 1..100");
  Planes p = planes_of(image);
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<double, 64> q{};
  for (std::size_t i = 0; i < 64; ++i) q[i] = std::clamp((kJpegLuma[i] * scale + 50) / 100, 1, 255);

  std::array<std::array<double, 8>, 8> basis{};
  for (std::size_t u = 0; u < 8; ++u)
    for (std::size_t x = 0; x < 8; ++x) {
      const double cu = u == 0 ? std::sqrt(0.125) : 0.5;
      basis[u][x] = cu * std::cos((2.0 * static_cast<double>(x) + 1.0) * static_cast<double>(u) * std::numbers::pi / 16.0);
    }

  std::array<double, 64> block{}, coef{};
  for (std::size_t c = 0; c < p.channels; ++c)
    for (std::size_t by = 0; by < p.height; by += 8)
      for (std::size_t bx = 0; bx < p.width; bx += 8) {
        for (std::size_t y = 0; y < 8; ++y)
          for (std::size_t x = 0; x < 8; ++x) {
            const std::size_t sy = std::min(by + y, p.height - 1), sx = std::min(bx + x, p.width - 1);
            block[y * 8 + x] = 255.0 * p.at(c, sy, sx) - 128.0;
          }
        for (std::size_t u = 0; u < 8; ++u)
          for (std::size_t v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (std::size_t y = 0; y < 8; ++y)
              for (std::size_t x = 0; x < 8; ++x) acc += basis[u][y] * basis[v][x] * block[y * 8 + x];
            coef[u * 8 + v] = std::round(acc / q[u * 8 + v]) * q[u * 8 + v];
          }
        for (std::size_t y = 0; y < 8 && by + y < p.height; ++y)
          for (std::size_t x = 0; x < 8 && bx + x < p.width; ++x) {
            double acc = 0.0;
            for (std::size_t u = 0; u < 8; ++u)
              for (std::size_t v = 0; v < 8; ++v) acc += basis[u][y] * basis[v][x] * coef[u * 8 + v];
            p.at(c, by + y, bx + x) = static_cast<float>((acc + 128.0) / 255.0);
          }
      }
  clamp_unit(p);
  return tensor_of(std::move(p));
}

Sample augment(const Sample& sample, std::uint64_t seed, const AugmentConfig& config) {
  config.validate();
  sample.validate();
  Rng rng(seed);
  Planes img = planes_of(sample.image);
  TissueMask mask = sample.mask;

  if (rng.bernoulli(config.hflip)) {
    img = planes_of(flip_horizontal(tensor_of(img)));
    mask = flip_horizontal(mask);
  }
  if (rng.bernoulli(config.vflip)) {
    img = planes_of(flip_vertical(tensor_of(img)));
    mask = flip_vertical(mask);
  }
  if (rng.bernoulli(config.rot90)) {
    const int k = 1 + static_cast<int>(rng.below(3));
    img = planes_of(rotate90(tensor_of(img), k));
    mask = rotate90(mask, k);
  }
  if (rng.bernoulli(config.shift_scale)) {
    ShiftScale t;
    t.scale = rng.uniform(1.0 - config.scale_limit, 1.0 + config.scale_limit);
    t.ty = rng.uniform(-config.shift_limit, config.shift_limit) * static_cast<double>(img.height);
    t.tx = rng.uniform(-config.shift_limit, config.shift_limit) * static_cast<double>(img.width);
    img = apply_shift_scale(img, t);
    mask = apply_shift_scale(mask, t);
  }

  const std::size_t plane = img.height * img.width;
  if (rng.bernoulli(config.rgb_shift) && img.channels == 3) {
    for (std::size_t c = 0; c < 3; ++c) {
      const auto d = static_cast<float>(rng.uniform(-config.rgb_shift_limit, config.rgb_shift_limit));
      for (std::size_t i = 0; i < plane; ++i) img.values[c * plane + i] += d;
    }
    clamp_unit(img);
  }
  if (rng.bernoulli(config.hsv) && img.channels == 3) {
    const double dh = rng.uniform(-config.hue_shift_limit, config.hue_shift_limit);
    const double ds = rng.uniform(-config.sat_shift_limit, config.sat_shift_limit);
    const double dv = rng.uniform(-config.val_shift_limit, config.val_shift_limit);
    for (std::size_t i = 0; i < plane; ++i) {
      double h, s, v, r, g, b;
      rgb_to_hsv(img.values[i], img.values[plane + i], img.values[2 * plane + i], h, s, v);
      hsv_to_rgb(h + dh, std::clamp(s + ds, 0.0, 1.0), std::clamp(v + dv, 0.0, 1.0), r, g, b);
      img.values[i] = static_cast<float>(r);
      img.values[plane + i] = static_cast<float>(g);
      img.values[2 * plane + i] = static_cast<float>(b);
    }
    clamp_unit(img);
  }
  if (rng.bernoulli(config.brightness_contrast)) {
    const auto alpha = static_cast<float>(1.0 + rng.uniform(-config.contrast_limit, config.contrast_limit));
    const auto beta = static_cast<float>(rng.uniform(-config.brightness_limit, config.brightness_limit));
    for (auto& v : img.values) v = alpha * v + beta;
    clamp_unit(img);
  }
  if (rng.bernoulli(config.blur) && config.blur_sigma_max > 0.0) {
    const double sigma = rng.uniform(std::min(0.1, config.blur_sigma_max), config.blur_sigma_max);
    img = convolve_separable(img, gaussian_kernel(sigma));
    clamp_unit(img);
  }
  if (rng.bernoulli(config.sharpen)) {
    const auto amount = static_cast<float>(rng.uniform(0.2, 0.5));
    const Planes smooth = convolve_separable(img, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] += amount * (img.values[i] - smooth.values[i]);
    clamp_unit(img);
  }
  if (rng.bernoulli(config.jpeg)) {
    const auto span = static_cast<std::uint64_t>(config.jpeg_quality_max - config.jpeg_quality_min + 1);
    const int quality = config.jpeg_quality_min + static_cast<int>(rng.below(span));
    img = planes_of(jpeg_roundtrip(tensor_of(img), quality));
  }

  Sample out;
  out.id = sample.id;
  out.cohort = sample.cohort;
  out.image = tensor_of(std::move(img));
  out.mask = std::move(mask);
  return out;
}

}  // namespace pseg::data
