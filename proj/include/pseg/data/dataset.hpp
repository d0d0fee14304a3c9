#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pseg/data/mask.hpp"
#include "pseg/diff/tensor.hpp"

namespace pseg::data {

enum class Cohort { Primary, Metastatic, Synthetic };

std::string_view cohort_name(Cohort c);
Cohort parse_cohort(std::string_view name);

struct Sample {
  diff::Tensor<float> image;  // 3×H×W in [0, 1]
  TissueMask mask;
  std::string id;
  Cohort cohort = Cohort::Primary;

  std::size_t height() const { return mask.height; }
  std::size_t width() const { return mask.width; }
  void validate() const;
};

// Reads <root>/images/<id>.png and <root>/masks/<id>.png, plus the optional
// <root>/cohorts.csv ("id,cohort" rows). Ids are returned in sorted order.
// Ids missing from cohorts.csv default to the primary cohort.
std::vector<Sample> load_dataset(const std::filesystem::path& root);

// Image ids under <dir> (every *.png), sorted.
std::vector<std::string> list_png_ids(const std::filesystem::path& dir);

// Inverse of load_dataset; creates the directory layout.
void write_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples);

// Square input only. Bilinear for the image, nearest neighbour for the mask.
Sample resize_pair(const Sample& sample, std::size_t out = 224);
TissueMask resize_nearest(const TissueMask& mask, std::size_t out_h, std::size_t out_w);

}  // namespace pseg::data
