#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pseg/post/metrics.hpp"

namespace pseg::train {

struct EvalResult {
  post::DiceReport report;
  std::vector<std::string> ids;
  std::string per_image_csv;
};

// Compares <pred_dir>/*.png against <gt_dir>/*.png by id. Ground truth at a
// different resolution is resized (nearest) to the prediction. Throws
// LookupError listing the symmetric difference when the id sets differ.
EvalResult evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                         post::DiceAggregation aggregation = post::DiceAggregation::Micro);

}  // namespace pseg::train
