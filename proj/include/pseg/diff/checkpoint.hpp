#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pseg/diff/tensor.hpp"

namespace pseg::diff {

template <typename T>
using NamedParameters = std::vector<std::pair<std::string, Tensor<T>>>;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout (little-endian): "PSEG", u32 version, u32 count, then per
// entry: u16 name length, UTF-8 name, u8 rank, u32 dims, f32 payload.
void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);

template <typename T>
void save_parameters(const std::filesystem::path& path, const NamedParameters<T>& params);

// Copies stored values into `params`; names and shapes must match exactly.
template <typename T>
void load_parameters(const std::filesystem::path& path, NamedParameters<T>& params);

}  // namespace pseg::diff
