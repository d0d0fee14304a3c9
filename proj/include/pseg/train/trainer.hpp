#pragma once

#include <cstddef>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "pseg/data/dataset.hpp"
#include "pseg/train/config.hpp"

namespace pseg::train {

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global, starts at 0
  float l_final = 0;
  float l_ptc = 0;
  float l_output = 0;
};

struct ValidationRecord {
  std::size_t epoch = 0;
  double l_final = 0;
  double micro_dice = 0;
};

struct RunLog {
  std::vector<StepRecord> steps;
  std::vector<ValidationRecord> validation;

  // "epoch,step,l_final,l_ptc,l_output", floats in shortest round-trip form.
  std::string steps_csv() const;
  // "epoch,l_final,micro_dice"
  std::string validation_csv() const;
};

struct TrainResult {
  RunLog log;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0;
  bool early_stopped = false;
  std::filesystem::path best_checkpoint;
};

// Output directory layout: best.ckpt (+ .cfg), last.ckpt (+ .cfg, the most
// recent finite state), runlog.csv, validation.csv.
//
// Samples must already be at the model input size. An empty validation set
// validates on the training samples. Throws NumericError on a non-finite loss
// or gradient (last.ckpt then holds the last good weights) and LookupError
// before the first epoch if any sample has no tokens.
TrainResult train_model(const std::vector<data::Sample>& train_set, const std::vector<data::Sample>& val_set,
                        const TrainConfig& config, const std::filesystem::path& out_dir,
                        std::ostream* progress = nullptr);

// Loads a dataset directory, resizes to the model input and holds out
// config.val_fraction of it for validation.
TrainResult train(const std::filesystem::path& dataset_root, const TrainConfig& config,
                  const std::filesystem::path& out_dir, std::ostream* progress = nullptr);

std::vector<data::Sample> load_resized(const std::filesystem::path& dataset_root, std::size_t side);

}  // namespace pseg::train
