#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pseg/data/dataset.hpp"

namespace pseg::data {

struct Fold {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  friend bool operator==(const Fold&, const Fold&) = default;
};

struct FoldItem {
  std::string id;
  Cohort cohort = Cohort::Primary;
};

// Stratified by cohort: each cohort is shuffled with a seed-derived stream and
// dealt round-robin, the dealer position carrying over between cohorts so fold
// sizes differ by at most one. Id lists are sorted.
std::vector<Fold> kfold_split(const std::vector<FoldItem>& items, std::size_t k, std::uint64_t seed);
std::vector<Fold> kfold_split(const std::vector<Sample>& samples, std::size_t k, std::uint64_t seed);

}  // namespace pseg::data
