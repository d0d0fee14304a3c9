#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pseg/data/mask.hpp"
#include "pseg/diff/checkpoint.hpp"
#include "pseg/diff/tensor.hpp"
#include "pseg/ptc/ptc.hpp"
#include "pseg/segnet/segnet.hpp"
#include "pseg/tokens/tokens.hpp"
#include "pseg/train/config.hpp"

namespace pseg::train {

struct StageOutputs {
  diff::Tensor<float> ptc;  // 5×H×W intermediate maps
  diff::Tensor<float> seg;  // 5×H×W class probabilities
};

// PTC head and segmentation network with the image fused in between. The
// token source is not part of it: tokens arrive precomputed and frozen.
class Pipeline {
 public:
  // Weights initialized from config.seed.
  explicit Pipeline(const TrainConfig& config);

  // grid: 1280×g×g (or batched), image: 3×14g×14g (or batched).
  StageOutputs forward(const diff::Tensor<float>& grid, const diff::Tensor<float>& image) const;

  const TrainConfig& config() const noexcept { return config_; }
  diff::NamedParameters<float> named_parameters() const;
  std::vector<diff::Tensor<float>> parameters() const;

  // Writes <path> (weights) and <path>.cfg (the full config).
  void save(const std::filesystem::path& path) const;
  static Pipeline load(const std::filesystem::path& path);

 private:
  TrainConfig config_;
  ptc::Ptc<float> ptc_;
  segnet::SegNet<float> segnet_;
};

std::filesystem::path config_sidecar(const std::filesystem::path& checkpoint);

// Tokens for a 3×224×224 image, as the 1280×16×16 grid.
diff::Tensor<float> token_grid(const tokens::TokenSource& source, const diff::Tensor<float>& image,
                               const std::string& image_id);

struct Prediction {
  diff::Tensor<float> ptc;
  diff::Tensor<float> probabilities;
  data::TissueMask raw;   // gated argmax
  data::TissueMask mask;  // after postprocessing (equals raw when disabled)
};

Prediction predict(const Pipeline& pipeline, const diff::Tensor<float>& grid, const diff::Tensor<float>& image,
                   const InferOptions& options);

}  // namespace pseg::train
