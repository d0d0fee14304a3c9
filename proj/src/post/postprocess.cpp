#include "pseg/post/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pseg/error.hpp"

namespace pseg::post {

using data::TissueMask;

StructuringElement::StructuringElement(std::size_t size) : size_(size) {
  if (size == 0 || size % 2 == 0) {
    throw std::invalid_argument("structuring element size must be odd and positive, got " + std::to_string(size));
  }
  const double r = static_cast<double>(size) / 2.0;
  const auto half = radius();
  for (std::ptrdiff_t dy = -half; dy <= half; ++dy) {
    std::ptrdiff_t hw = -1;
    for (std::ptrdiff_t dx = 0; dx <= half; ++dx) {
      if (static_cast<double>(dy * dy + dx * dx) <= r * r) hw = dx;
    }
    half_widths_.push_back(hw);
    count_ += hw < 0 ? 0 : static_cast<std::size_t>(2 * hw + 1);
  }
}

bool StructuringElement::at(std::ptrdiff_t dy, std::ptrdiff_t dx) const {
  if (dy < -radius() || dy > radius()) return false;
  const auto hw = half_width(dy);
  return dx >= -hw && dx <= hw;
}

BinaryMask BinaryMask::filled(std::size_t height, std::size_t width, bool value) {
  return {height, width, std::vector<std::uint8_t>(height * width, value ? 1 : 0)};
}

BinaryMask BinaryMask::of_label(const TissueMask& mask, std::uint8_t label) {
  BinaryMask out = filled(mask.height, mask.width);
  for (std::size_t i = 0; i < mask.size(); ++i) out.bits[i] = mask.labels[i] == label ? 1 : 0;
  return out;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

namespace {

void check_same(const BinaryMask& a, const BinaryMask* b, const char* op) {
  if (a.bits.size() != a.height * a.width) throw ShapeError(std::string(op) + ": mask buffer size mismatch");
  if (b && (b->height != a.height || b->width != a.width || b->bits.size() != a.bits.size())) {
    throw ShapeError(std::string(op) + ": domain shape differs from mask shape");
  }
}

// Row-wise prefix sums: P[y][x] = count of set cells in row y before column x.
std::vector<std::size_t> row_prefix(const BinaryMask& m, const BinaryMask* domain) {
  std::vector<std::size_t> p(m.height * (m.width + 1), 0);
  for (std::size_t y = 0; y < m.height; ++y) {
    std::size_t* row = &p[y * (m.width + 1)];
    for (std::size_t x = 0; x < m.width; ++x) {
      const std::size_t i = y * m.width + x;
      const bool set = m.bits[i] != 0 && (!domain || domain->bits[i] != 0);
      row[x + 1] = row[x] + (set ? 1 : 0);
    }
  }
  return p;
}

// Visits the in-bounds part of every SE row around (y, x) as [x0, x1].
template <typename F>
void for_each_span(const StructuringElement& se, std::size_t h, std::size_t w, std::size_t y, std::size_t x, F f) {
  const auto r = se.radius();
  for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
    const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
    const auto hw = se.half_width(dy);
    if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h) || hw < 0) continue;
    const auto x0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(x) - hw);
    const auto x1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w) - 1, static_cast<std::ptrdiff_t>(x) + hw);
    if (!f(static_cast<std::size_t>(yy), static_cast<std::size_t>(x0), static_cast<std::size_t>(x1))) return;
  }
}

}  // namespace

BinaryMask erode(const BinaryMask& m, const StructuringElement& se, const BinaryMask* domain) {
  check_same(m, domain, "erode");
  const auto pm = row_prefix(m, domain);
  std::vector<std::size_t> pd;
  if (domain) pd = row_prefix(*domain, nullptr);
  const std::size_t stride = m.width + 1;
  BinaryMask out = BinaryMask::filled(m.height, m.width);
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) {
      const std::size_t i = y * m.width + x;
      if (m.bits[i] == 0 || (domain && domain->bits[i] == 0)) continue;
      bool all = true;
      for_each_span(se, m.height, m.width, y, x, [&](std::size_t yy, std::size_t x0, std::size_t x1) {
        const std::size_t have = pm[yy * stride + x1 + 1] - pm[yy * stride + x0];
        const std::size_t need = domain ? pd[yy * stride + x1 + 1] - pd[yy * stride + x0] : x1 - x0 + 1;
        all = have == need;
        return all;
      });
      out.bits[i] = all ? 1 : 0;
    }
  return out;
}

BinaryMask dilate(const BinaryMask& m, const StructuringElement& se, const BinaryMask* domain) {
  check_same(m, domain, "dilate");
  const auto pm = row_prefix(m, domain);
  const std::size_t stride = m.width + 1;
  BinaryMask out = BinaryMask::filled(m.height, m.width);
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) {
      const std::size_t i = y * m.width + x;
      if (domain && domain->bits[i] == 0) continue;
      bool any = false;
      for_each_span(se, m.height, m.width, y, x, [&](std::size_t yy, std::size_t x0, std::size_t x1) {
        any = pm[yy * stride + x1 + 1] != pm[yy * stride + x0];
        return !any;
      });
      out.bits[i] = any ? 1 : 0;
    }
  return out;
}

BinaryMask morph_open(const BinaryMask& m, const StructuringElement& se, const BinaryMask* domain) {
  return dilate(erode(m, se, domain), se, domain);
}

BinaryMask morph_close(const BinaryMask& m, const StructuringElement& se, const BinaryMask* domain) {
  return erode(dilate(m, se, domain), se, domain);
}

template <typename T>
TissueMask argmax_map(const diff::Tensor<T>& probs) {
  if (probs.rank() != 3 || probs.dim(0) != data::kNumForegroundClasses) {
    throw ShapeError("argmax_map expects 5×H×W probabilities, got " + diff::to_string(probs.shape()));
  }
  const std::size_t h = probs.dim(1), w = probs.dim(2), plane = h * w;
  TissueMask out = TissueMask::filled(h, w);
  for (std::size_t i = 0; i < plane; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < data::kNumForegroundClasses; ++c) {
      if (probs[c * plane + i] > probs[best * plane + i]) best = c;
    }
    out.labels[i] = static_cast<std::uint8_t>(best + 1);
  }
  return out;
}

template <typename T>
TissueMask gate_background(const TissueMask& mask, const diff::Tensor<T>& probs, double threshold) {
  if (probs.rank() != 3 || probs.dim(0) != data::kNumForegroundClasses || probs.dim(1) != mask.height ||
      probs.dim(2) != mask.width) {
    throw ShapeError("gate_background: probabilities " + diff::to_string(probs.shape()) + " do not match the mask");
  }
  TissueMask out = mask;
  if (threshold <= 0.0) return out;
  const std::size_t plane = mask.size();
  for (std::size_t i = 0; i < plane; ++i) {
    double best = probs[i];
    for (std::size_t c = 1; c < data::kNumForegroundClasses; ++c) best = std::max(best, static_cast<double>(probs[c * plane + i]));
    if (best < threshold) out.labels[i] = 0;
  }
  return out;
}

TissueMask postprocess(const TissueMask& mask, const StructuringElement& se) {
  mask.validate();
  TissueMask out = TissueMask::filled(mask.height, mask.width);
  BinaryMask domain = BinaryMask::filled(mask.height, mask.width, true);
  for (auto label = static_cast<int>(data::kMaxLabel); label >= 1; --label) {
    const auto l = static_cast<std::uint8_t>(label);
    BinaryMask cls = BinaryMask::of_label(mask, l);
    for (std::size_t i = 0; i < cls.bits.size(); ++i) cls.bits[i] &= domain.bits[i];
    const BinaryMask kept = morph_close(morph_open(cls, se, &domain), se, &domain);
    for (std::size_t i = 0; i < kept.bits.size(); ++i) {
      if (kept.bits[i]) {
        out.labels[i] = l;
        domain.bits[i] = 0;
      }
    }
  }
  return out;
}

template TissueMask argmax_map(const diff::Tensor<float>&);
template TissueMask argmax_map(const diff::Tensor<double>&);
template TissueMask gate_background(const TissueMask&, const diff::Tensor<float>&, double);
template TissueMask gate_background(const TissueMask&, const diff::Tensor<double>&, double);

}  // namespace pseg::post
