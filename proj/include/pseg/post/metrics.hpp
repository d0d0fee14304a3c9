#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pseg/data/mask.hpp"

namespace pseg::post {

enum class DiceAggregation {
  Micro,     // pool pixel counts over all images, then one Dice per class
  PerImage,  // Dice per image and class, averaged over images
};

// Pixel counts for the five foreground classes (index = label - 1).
struct DiceCounts {
  std::array<std::uint64_t, data::kNumForegroundClasses> intersection{};
  std::array<std::uint64_t, data::kNumForegroundClasses> predicted{};
  std::array<std::uint64_t, data::kNumForegroundClasses> truth{};

  void add(const data::TissueMask& pred, const data::TissueMask& gt);
  // Dice per class; a class absent from both sides scores 1.
  std::array<double, data::kNumForegroundClasses> dice() const;
};

struct DiceReport {
  std::array<double, data::kNumForegroundClasses> per_class{};
  double micro_average = 0.0;  // mean of per_class
  std::size_t n_images = 0;
};

DiceReport dice_report(const std::vector<data::TissueMask>& preds, const std::vector<data::TissueMask>& gts,
                       DiceAggregation aggregation = DiceAggregation::Micro);

// "class,dice" header, one row per class then micro_average, six decimals.
std::string report_csv(const DiceReport& report);

// "id,tumour,...,epidermis,mean" with one row per image.
std::string per_image_csv(const std::vector<std::string>& ids, const std::vector<data::TissueMask>& preds,
                          const std::vector<data::TissueMask>& gts);

}  // namespace pseg::post
