#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pseg/data/mask.hpp"
#include "pseg/diff/tensor.hpp"

namespace pseg::post {

// Disk inscribed in a size×size box: cell (dy, dx) is set iff
// dy² + dx² <= (size / 2)², offsets relative to the centre.
class StructuringElement {
 public:
  explicit StructuringElement(std::size_t size = 13);

  std::size_t size() const noexcept { return size_; }
  std::ptrdiff_t radius() const noexcept { return static_cast<std::ptrdiff_t>(size_ / 2); }
  bool at(std::ptrdiff_t dy, std::ptrdiff_t dx) const;
  std::size_t count() const noexcept { return count_; }
  // Row dy covers dx in [-half_width(dy), half_width(dy)]; -1 for an empty row.
  std::ptrdiff_t half_width(std::ptrdiff_t dy) const { return half_widths_[static_cast<std::size_t>(dy + radius())]; }

 private:
  std::size_t size_;
  std::size_t count_ = 0;
  std::vector<std::ptrdiff_t> half_widths_;
};

struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1, row-major

  static BinaryMask filled(std::size_t height, std::size_t width, bool value = false);
  static BinaryMask of_label(const data::TissueMask& mask, std::uint8_t label);
  bool at(std::size_t y, std::size_t x) const { return bits[y * width + x] != 0; }
  std::size_t count() const;
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// Structuring-element cells falling outside the image are ignored: dilation
// sees them as background, erosion does not require them. An optional domain
// restricts both operators to a sub-region, which is then treated exactly
// like the image border. The result is always inside the domain.
BinaryMask erode(const BinaryMask& m, const StructuringElement& se, const BinaryMask* domain = nullptr);
BinaryMask dilate(const BinaryMask& m, const StructuringElement& se, const BinaryMask* domain = nullptr);
BinaryMask morph_open(const BinaryMask& m, const StructuringElement& se, const BinaryMask* domain = nullptr);
BinaryMask morph_close(const BinaryMask& m, const StructuringElement& se, const BinaryMask* domain = nullptr);

// label = 1 + index of the largest channel; ties go to the lower channel.
template <typename T>
data::TissueMask argmax_map(const diff::Tensor<T>& probs);

// Pixels whose largest class probability is below `threshold` become
// background. A threshold of 0 leaves the mask untouched.
template <typename T>
data::TissueMask gate_background(const data::TissueMask& mask, const diff::Tensor<T>& probs, double threshold);

// Per-class opening then closing. Classes are resolved from label 5 down to
// label 1; each class is filtered inside the pixels not yet claimed by a
// later label, so later labels win conflicts. Unclaimed pixels become 0.
data::TissueMask postprocess(const data::TissueMask& mask, const StructuringElement& se = StructuringElement(13));

}  // namespace pseg::post
