#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "pseg/data/augment.hpp"
#include "pseg/losses/losses.hpp"
#include "pseg/ptc/ptc.hpp"
#include "pseg/segnet/segnet.hpp"
#include "pseg/tokens/tokens.hpp"

namespace pseg::train {

struct InferOptions {
  // Pixels whose winning class probability falls below this become
  // background. 0 disables gating.
  double background_threshold = 0.5;
  bool postprocess = true;
  std::size_t se_size = 13;
};

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 0.005;
  std::size_t batch_size = 4;  // 24 on production hardware
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 10;
  std::uint64_t seed = 0;
  // Fraction of the dataset held out for validation when train() splits it
  // itself. 0 validates on the training images.
  double val_fraction = 0.2;
  bool weighted_sampler = true;

  losses::LossConfig loss;
  ptc::PtcConfig ptc;
  segnet::SegNetConfig segnet;
  data::AugmentConfig augment;
  tokens::TokenSourceSpec token_source = tokens::TokenSourceSpec::stub(0);
  InferOptions infer;

  void validate() const;
};

// INI text with sections [train] [loss] [ptc] [segnet] [augment] [tokens]
// [infer]. Missing keys keep their defaults, unknown keys are rejected.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
// Every field, in a form parse_config reads back to an identical config.
std::string format_config(const TrainConfig& config);
void save_config(const std::filesystem::path& path, const TrainConfig& config);

}  // namespace pseg::train
