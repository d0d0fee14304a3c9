#include "pseg/data/mask.hpp"

#include <array>
#include <string>

#include "pseg/error.hpp"

namespace pseg::data {

std::string_view class_name(std::size_t label) {
  static constexpr std::array<std::string_view, 6> names{"background", "tumour",        "stroma",
                                                         "necrosis",   "blood_vessels", "epidermis"};
  if (label >= names.size()) throw std::out_of_range("no tissue class with label " + std::to_string(label));
  return names[label];
}

TissueMask TissueMask::filled(std::size_t height, std::size_t width, std::uint8_t label) {
  return {height, width, std::vector<std::uint8_t>(height * width, label)};
}

void TissueMask::validate() const {
  if (labels.size() != height * width) {
    throw ShapeError("tissue mask buffer holds " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  for (auto v : labels) {
    if (v > kMaxLabel) throw std::invalid_argument("tissue mask label " + std::to_string(v) + " outside 0..5");
  }
}

}  // namespace pseg::data
