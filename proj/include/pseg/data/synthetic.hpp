#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "pseg/data/dataset.hpp"

namespace pseg::data {

struct SyntheticConfig {
  std::size_t count = 4;
  std::size_t size = 256;
  std::uint64_t seed = 0;
};

// Tissue-like toy images: a noisy pale background with a stroma band, an
// epidermis strip along one edge and ellipses of tumour, necrosis and blood
// vessel. Every class has its own colour. Ids are synth_000, synth_001, ...
std::vector<Sample> generate_synthetic(const SyntheticConfig& config);

// generate_synthetic followed by write_dataset.
std::vector<Sample> make_synthetic(const std::filesystem::path& root, const SyntheticConfig& config);

}  // namespace pseg::data
