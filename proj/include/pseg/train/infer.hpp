#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pseg/data/image_io.hpp"
#include "pseg/data/mask.hpp"
#include "pseg/tokens/tokens.hpp"
#include "pseg/train/config.hpp"

namespace pseg::train {

struct Rgba {
  std::uint8_t r, g, b, a;
};

// Overlay colours indexed by label; background is fully transparent.
inline constexpr std::array<Rgba, 6> kOverlayPalette{{
    {0, 0, 0, 0},        // background
    {255, 0, 0, 128},    // tumour
    {0, 255, 0, 128},    // stroma
    {0, 0, 0, 128},      // necrosis
    {0, 0, 255, 128},    // blood vessels
    {255, 255, 0, 128},  // epidermis
}};

data::RgbImage overlay(const data::RgbImage& image, const data::TissueMask& mask);

struct InferRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path images;
  std::filesystem::path out;
  std::optional<tokens::TokenSourceSpec> tokens;  // defaults to the checkpoint's
  std::optional<bool> postprocess;                // defaults to the checkpoint's
  bool emit_heatmaps = false;
  bool emit_overlays = true;
};

struct InferSummary {
  std::vector<std::string> written;
  std::vector<std::pair<std::string, std::string>> skipped;  // id, reason
};

// For every <images>/*.png writes <out>/masks/<id>.png, optionally
// <out>/overlays/<id>.png and <out>/heatmaps/<id>_{ptc,prob}_<class>.png.
// Images that cannot be read, resized or tokenized are skipped and reported.
InferSummary run_inference(const InferRequest& request);

}  // namespace pseg::train
