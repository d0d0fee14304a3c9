#pragma once

#include <vector>

#include "pseg/data/mask.hpp"
#include "pseg/diff/tensor.hpp"

namespace pseg::losses {

enum class FocalReduction { Mean, Sum };
// PerChannel: Dice loss per class channel, averaged over channels.
// Global: one Dice over all channels pooled together.
enum class DiceReduction { PerChannel, Global };

struct LossConfig {
  double alpha = 0.3;
  double gamma = 3.5;
  double epsilon = 1e-6;
  double dice_weight = 2.0;
  double ptc_weight = 0.2;
  FocalReduction focal_reduction = FocalReduction::Mean;
  DiceReduction dice_reduction = DiceReduction::PerChannel;

  void validate() const;
};

inline constexpr double kProbabilityClamp = 1e-7;

// Binary 5×H×W (or N×5×H×W) targets; background pixels are all zero.
template <typename T>
struct OneHotTarget {
  diff::Tensor<T> values;

  static OneHotTarget from_mask(const data::TissueMask& mask);
  static OneHotTarget from_masks(const std::vector<data::TissueMask>& masks);
};

// Batched inputs average the per-sample loss.
template <typename T>
diff::Tensor<T> dice_loss(const diff::Tensor<T>& p, const diff::Tensor<T>& g, double epsilon,
                          DiceReduction reduction = DiceReduction::PerChannel);

// Two-branch focal term per pixel-channel; p is clamped to [1e-7, 1 - 1e-7].
template <typename T>
diff::Tensor<T> focal_loss(const diff::Tensor<T>& p, const diff::Tensor<T>& g, double alpha, double gamma,
                           FocalReduction reduction = FocalReduction::Mean);

// dice_weight * dice + focal
template <typename T>
diff::Tensor<T> dice_fl(const diff::Tensor<T>& p, const diff::Tensor<T>& g, const LossConfig& config);

template <typename T>
struct DualStageLoss {
  diff::Tensor<T> total;   // ptc_weight * ptc + output
  diff::Tensor<T> ptc;
  diff::Tensor<T> output;
};

// ptc_weight * l_ptc + l_output
template <typename T>
diff::Tensor<T> combine_stages(const diff::Tensor<T>& l_ptc, const diff::Tensor<T>& l_output, double ptc_weight);

template <typename T>
DualStageLoss<T> dual_stage_loss(const diff::Tensor<T>& ptc_out, const diff::Tensor<T>& seg_out,
                                 const diff::Tensor<T>& g, const LossConfig& config);

}  // namespace pseg::losses
