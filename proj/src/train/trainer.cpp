#include "pseg/train/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>

#include "pseg/data/augment.hpp"
#include "pseg/data/sampler.hpp"
#include "pseg/diff/adamw.hpp"
#include "pseg/diff/ops.hpp"
#include "pseg/error.hpp"
#include "pseg/losses/losses.hpp"
#include "pseg/post/metrics.hpp"
#include "pseg/rng.hpp"
#include "pseg/train/pipeline.hpp"

namespace pseg::train {

using diff::Tensor;

namespace {

template <typename F>
std::string shortest(F v) {
  char buf[48];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_logs(const std::filesystem::path& dir, const RunLog& log) {
  write_text(dir / "runlog.csv", log.steps_csv());
  write_text(dir / "validation.csv", log.validation_csv());
}

struct Prepared {
  const data::Sample* sample;
  Tensor<float> grid;  // tokens of the un-augmented image
};

std::vector<Prepared> prepare(const std::vector<data::Sample>& samples, const tokens::TokenSource& source,
                              std::size_t side) {
  std::vector<Prepared> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.height() != side || s.width() != side) {
      throw ShapeError("sample '" + s.id + "' is " + std::to_string(s.height()) + "x" + std::to_string(s.width()) +
                       ", expected the model input size " + std::to_string(side));
    }
    try {
      out.push_back({&s, token_grid(source, s.image, s.id)});
    } catch (const LookupError& e) {
      throw LookupError(std::string("missing tokens, aborting before training: ") + e.what());
    }
  }
  return out;
}

}  // namespace

std::string RunLog::steps_csv() const {
  std::string out = "epoch,step,l_final,l_ptc,l_output\n";
  for (const auto& r : steps) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," + shortest(r.l_final) + "," +
           shortest(r.l_ptc) + "," + shortest(r.l_output) + "\n";
  }
  return out;
}

std::string RunLog::validation_csv() const {
  std::string out = "epoch,l_final,micro_dice\n";
  for (const auto& r : validation) {
    out += std::to_string(r.epoch) + "," + shortest(r.l_final) + "," + shortest(r.micro_dice) + "\n";
  }
  return out;
}

TrainResult train_model(const std::vector<data::Sample>& train_set, const std::vector<data::Sample>& val_set,
                        const TrainConfig& config, const std::filesystem::path& out_dir, std::ostream* progress) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  diff::FlushDenormalsGuard ftz;
  std::filesystem::create_directories(out_dir);

  const std::size_t side = config.ptc.output_side;
  const auto source = tokens::make_token_source(config.token_source);
  // Stub tokens are a function of the pixels, so augmented images get fresh
  // ones. File tokens are keyed by id and stay those of the original image.
  const bool content_tokens = config.token_source.kind == tokens::TokenSourceSpec::Kind::Stub;
  const auto train_items = prepare(train_set, *source, side);
  const auto val_items = val_set.empty() ? train_items : prepare(val_set, *source, side);

  Pipeline pipeline(config);
  diff::AdamW<float> optimizer(pipeline.parameters(), {config.lr, config.weight_decay});

  std::vector<data::TissueMask> train_masks;
  for (const auto& s : train_set) train_masks.push_back(s.mask);
  const auto sampler = data::compute_sampler_weights(train_masks);

  TrainResult result;
  result.best_checkpoint = out_dir / "best.ckpt";
  result.best_val_loss = std::numeric_limits<double>::infinity();
  const auto last_checkpoint = out_dir / "last.ckpt";
  pipeline.save(last_checkpoint);

  std::size_t step = 0, stale = 0;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto order = config.weighted_sampler
                           ? data::draw_weighted(sampler, train_items.size(), derive_seed(config.seed, "sampler", epoch))
                           : data::shuffled_indices(train_items.size(), derive_seed(config.seed, "sampler", epoch));
    double epoch_loss = 0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<Tensor<float>> grids, images;
      std::vector<data::TissueMask> masks;
      for (std::size_t pos = begin; pos < end; ++pos) {
        const auto& item = train_items[order[pos]];
        auto s = data::augment(*item.sample, derive_seed(config.seed, "augment", epoch, pos), config.augment);
        grids.push_back(content_tokens ? token_grid(*source, s.image, s.id) : item.grid);
        images.push_back(s.image);
        masks.push_back(std::move(s.mask));
      }
      const auto target = losses::OneHotTarget<float>::from_masks(masks).values;
      const auto out = pipeline.forward(diff::stack(grids), diff::stack(images));
      const auto loss = losses::dual_stage_loss(out.ptc, out.seg, target, config.loss);
      const StepRecord rec{epoch, step, loss.total.item(), loss.ptc.item(), loss.output.item()};
      if (!std::isfinite(rec.l_final)) {
        write_logs(out_dir, result.log);
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                           "; last good weights in " + last_checkpoint.string());
      }
      optimizer.zero_grad();
      loss.total.backward();
      try {
        optimizer.step();
      } catch (const NumericError& e) {
        write_logs(out_dir, result.log);
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step) + "; last good weights in " + last_checkpoint.string());
      }
      result.log.steps.push_back(rec);
      epoch_loss += rec.l_final;
      ++batches;
      ++step;
    }

    // Validation: mean per-sample L_final and micro Dice of the gated argmax.
    double val_loss = 0;
    std::vector<data::TissueMask> preds, gts;
    {
      diff::NoGradGuard no_grad;
      InferOptions raw = config.infer;
      raw.postprocess = false;
      for (const auto& item : val_items) {
        const auto target = losses::OneHotTarget<float>::from_mask(item.sample->mask).values;
        const auto out = pipeline.forward(item.grid, item.sample->image);
        val_loss += losses::dual_stage_loss(out.ptc, out.seg, target, config.loss).total.item();
        preds.push_back(predict(pipeline, item.grid, item.sample->image, raw).mask);
        gts.push_back(item.sample->mask);
      }
    }
    val_loss /= static_cast<double>(val_items.size());
    const double dice = post::dice_report(preds, gts).micro_average;
    result.log.validation.push_back({epoch, val_loss, dice});
    result.epochs_run = epoch + 1;
    pipeline.save(last_checkpoint);

    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      pipeline.save(result.best_checkpoint);
      stale = 0;
    } else {
      ++stale;
    }
    write_logs(out_dir, result.log);

    if (progress) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      char line[160];
      std::snprintf(line, sizeof line, "epoch %zu/%zu  train %.5f  val %.5f  dice %.4f  %s(%.1fs)\n", epoch + 1,
                    config.max_epochs, epoch_loss / static_cast<double>(batches), val_loss, dice,
                    stale == 0 ? "* " : "", secs);
      *progress << line << std::flush;
    }
    if (stale >= config.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

std::vector<data::Sample> load_resized(const std::filesystem::path& dataset_root, std::size_t side) {
  auto samples = data::load_dataset(dataset_root);
  for (auto& s : samples) s = data::resize_pair(s, side);
  return samples;
}

TrainResult train(const std::filesystem::path& dataset_root, const TrainConfig& config,
                  const std::filesystem::path& out_dir, std::ostream* progress) {
  config.validate();
  const auto samples = load_resized(dataset_root, config.ptc.output_side);
  if (samples.empty()) throw std::invalid_argument("train: no images under " + dataset_root.string());
  std::vector<data::Sample> train_set, val_set;
  std::size_t n_val = 0;
  if (config.val_fraction > 0 && samples.size() >= 2) {
    n_val = static_cast<std::size_t>(std::lround(config.val_fraction * static_cast<double>(samples.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, samples.size() - 1);
  }
  const auto order = data::shuffled_indices(samples.size(), derive_seed(config.seed, "holdout"));
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? val_set : train_set).push_back(samples[order[i]]);
  return train_model(train_set, val_set, config, out_dir, progress);
}

}  // namespace pseg::train
