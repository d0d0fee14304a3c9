#include "pseg/data/kfold.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "pseg/rng.hpp"

namespace pseg::data {

std::vector<Fold> kfold_split(const std::vector<FoldItem>& items, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be at least 2, got " + std::to_string(k));
  if (k > items.size()) {
    throw std::invalid_argument("kfold_split: k = " + std::to_string(k) + " exceeds the " +
                                std::to_string(items.size()) + " samples");
  }
  std::set<std::string> seen;
  std::map<Cohort, std::vector<std::string>> by_cohort;
  for (const auto& item : items) {
    if (!seen.insert(item.id).second) throw std::invalid_argument("kfold_split: duplicate id " + item.id);
    by_cohort[item.cohort].push_back(item.id);
  }

  std::map<std::string, std::size_t> fold_of;
  std::size_t dealer = 0;
  for (auto& [cohort, ids] : by_cohort) {
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, "kfold", static_cast<std::uint64_t>(cohort)));
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
    for (const auto& id : ids) fold_of[id] = dealer++ % k;
  }

  std::vector<Fold> folds(k);
  for (const auto& [id, f] : fold_of) {  // map order keeps the lists sorted
    for (std::size_t j = 0; j < k; ++j) (j == f ? folds[j].val_ids : folds[j].train_ids).push_back(id);
  }
  return folds;
}

std::vector<Fold> kfold_split(const std::vector<Sample>& samples, std::size_t k, std::uint64_t seed) {
  std::vector<FoldItem> items;
  items.reserve(samples.size());
  for (const auto& s : samples) items.push_back({s.id, s.cohort});
  return kfold_split(items, k, seed);
}

}  // namespace pseg::data
