#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace pseg::data {

// Canonical label order. Five-channel tensors map channel k to label k + 1;
// background has no channel.
enum class TissueClass : std::uint8_t {
  Background = 0,
  Tumour = 1,
  Stroma = 2,
  Necrosis = 3,
  BloodVessels = 4,
  Epidermis = 5,
};

inline constexpr std::size_t kNumForegroundClasses = 5;
inline constexpr std::uint8_t kMaxLabel = 5;

// "background", "tumour", "stroma", "necrosis", "blood_vessels", "epidermis".
std::string_view class_name(std::size_t label);

struct TissueMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;  // row-major

  static TissueMask filled(std::size_t height, std::size_t width, std::uint8_t label = 0);

  std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }
  std::size_t size() const noexcept { return labels.size(); }
  // Throws when the buffer size or any label is invalid.
  void validate() const;

  friend bool operator==(const TissueMask&, const TissueMask&) = default;
};

}  // namespace pseg::data
