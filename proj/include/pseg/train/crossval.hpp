#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "pseg/data/kfold.hpp"
#include "pseg/post/metrics.hpp"
#include "pseg/train/config.hpp"

namespace pseg::train {

struct FoldResult {
  std::size_t index = 0;
  data::Fold fold;
  bool ok = false;
  std::string error;
  post::DiceReport report;  // on the fold's validation images, postprocessed
};

struct CrossvalSummary {
  std::vector<FoldResult> folds;
  std::size_t completed = 0;
  bool partial = false;
  // Over completed folds; std is the population deviation.
  std::array<double, data::kNumForegroundClasses> mean{};
  std::array<double, data::kNumForegroundClasses> stddev{};
  double micro_mean = 0;
  double micro_stddev = 0;

  // "class,mean,std" rows for the five classes and micro_average, preceded
  // by a "# folds completed: i/k" line that reads "(partial)" on failures.
  std::string csv() const;
};

// Folds by kfold_split(config.seed); each fold trains into <out>/fold_<i>
// and is evaluated on its held-out images. A failing fold is recorded and
// the remaining folds still run.
CrossvalSummary crossval(const std::filesystem::path& dataset_root, const TrainConfig& config, std::size_t k,
                         const std::filesystem::path& out_dir, std::ostream* progress = nullptr);

// Mean and population std of the completed folds.
void summarize(CrossvalSummary& summary);

}  // namespace pseg::train
