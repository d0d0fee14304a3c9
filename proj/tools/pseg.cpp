#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "pseg/data/synthetic.hpp"
#include "pseg/error.hpp"
#include "pseg/post/metrics.hpp"
#include "pseg/train/bench.hpp"
#include "pseg/train/crossval.hpp"
#include "pseg/train/evaluate.hpp"
#include "pseg/train/infer.hpp"
#include "pseg/train/pipeline.hpp"
#include "pseg/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace pseg;

namespace {

train::TrainConfig config_or_default(const std::string& path) {
  return path.empty() ? train::TrainConfig{} : train::load_config(path);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Panoptic tissue segmentation: train, infer, evaluate and benchmark"};
  app.require_subcommand(1);

  std::string data_dir, config_path, out_dir, ckpt, images, token_spec, pred_dir, gt_dir, out_csv, samples_csv;
  bool no_post = false, heatmaps = false, no_overlays = false, per_image = false, quiet = false;
  std::size_t runs = 100, resolution = 224, warmup = train::kBenchWarmup, k = 5, n = 4, size = 256;
  std::uint64_t seed = 0;

  auto* train_cmd = app.add_subcommand("train", "Train PTC + segnet on a dataset directory");
  train_cmd->add_option("--data", data_dir, "Dataset root (images/, masks/, optional cohorts.csv)")->required();
  train_cmd->add_option("--config", config_path, "INI config; defaults when omitted");
  train_cmd->add_option("--out", out_dir, "Run directory")->required();
  train_cmd->add_flag("--quiet", quiet, "No per-epoch progress");

  auto* infer_cmd = app.add_subcommand("infer", "Segment a directory of images");
  infer_cmd->add_option("--ckpt", ckpt, "Checkpoint (with its .cfg sidecar)")->required();
  infer_cmd->add_option("--images", images, "Directory of PNG images")->required();
  infer_cmd->add_option("--tokens", token_spec, "stub:SEED or file:PATH; defaults to the checkpoint's");
  infer_cmd->add_option("--out", out_dir, "Output directory")->default_val("predictions");
  infer_cmd->add_flag("--no-postprocess", no_post, "Write the raw argmax map");
  infer_cmd->add_flag("--emit-heatmaps", heatmaps, "Write PTC maps and class probabilities");
  infer_cmd->add_flag("--no-overlays", no_overlays, "Skip the colour overlays");

  auto* eval_cmd = app.add_subcommand("eval", "Dice report of predicted against ground-truth masks");
  eval_cmd->add_option("--pred", pred_dir, "Predicted mask directory")->required();
  eval_cmd->add_option("--gt", gt_dir, "Ground-truth mask directory")->required();
  eval_cmd->add_option("--out", out_csv, "CSV report path")->required();
  eval_cmd->add_flag("--per-image", per_image, "Average per-image Dice instead of pooling pixel counts");

  auto* bench_cmd = app.add_subcommand("bench", "Forward-pass latency");
  bench_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required();
  bench_cmd->add_option("--runs", runs, "Timed iterations")->default_val(100);
  bench_cmd->add_option("--resolution", resolution, "Input side in pixels")->default_val(224);
  bench_cmd->add_option("--warmup", warmup, "Untimed iterations first")->default_val(train::kBenchWarmup);
  bench_cmd->add_option("--samples", samples_csv, "Also write every timing to this CSV");

  auto* cv_cmd = app.add_subcommand("crossval", "k-fold cross-validation");
  cv_cmd->add_option("--data", data_dir, "Dataset root")->required();
  cv_cmd->add_option("--k", k, "Number of folds")->default_val(5);
  cv_cmd->add_option("--config", config_path, "INI config; defaults when omitted");
  cv_cmd->add_option("--out", out_dir, "Output directory")->default_val("crossval");
  cv_cmd->add_flag("--quiet", quiet, "No per-epoch progress");

  auto* synth_cmd = app.add_subcommand("make-synthetic", "Write a toy dataset");
  synth_cmd->add_option("--out", out_dir, "Dataset root")->required();
  synth_cmd->add_option("--n", n, "Number of images")->default_val(4);
  synth_cmd->add_option("--seed", seed, "Seed")->default_val(0);
  synth_cmd->add_option("--size", size, "Image side")->default_val(256);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const auto r = train::train(data_dir, config_or_default(config_path), out_dir, quiet ? nullptr : &std::cerr);
      std::printf("epochs %zu, best epoch %zu, best val L_final %.6f%s\ncheckpoint %s\n", r.epochs_run,
                  r.best_epoch + 1, r.best_val_loss, r.early_stopped ? " (early stop)" : "",
                  r.best_checkpoint.string().c_str());
    } else if (*infer_cmd) {
      train::InferRequest req{ckpt, images, out_dir, std::nullopt, std::nullopt, heatmaps, !no_overlays};
      if (!token_spec.empty()) req.tokens = tokens::TokenSourceSpec::parse(token_spec);
      if (no_post) req.postprocess = false;
      const auto s = train::run_inference(req);
      std::printf("wrote %zu masks to %s\n", s.written.size(), (fs::path(out_dir) / "masks").string().c_str());
      for (const auto& [id, why] : s.skipped) std::fprintf(stderr, "skipped %s: %s\n", id.c_str(), why.c_str());
      if (s.written.empty() && !s.skipped.empty()) return 1;
    } else if (*eval_cmd) {
      const auto r = train::evaluate_dirs(pred_dir, gt_dir, per_image ? post::DiceAggregation::PerImage
                                                                      : post::DiceAggregation::Micro);
      const auto csv = post::report_csv(r.report);
      write_file(out_csv, csv);
      std::fputs(csv.c_str(), stdout);
    } else if (*bench_cmd) {
      const auto pipeline = train::Pipeline::load(ckpt);
      const auto r = train::bench(pipeline, resolution, runs, warmup);
      std::puts(r.summary().c_str());
      if (!samples_csv.empty()) {
        std::string csv = "run,seconds\n";
        for (std::size_t i = 0; i < r.samples.size(); ++i) csv += std::to_string(i) + "," + std::to_string(r.samples[i]) + "\n";
        write_file(samples_csv, csv);
      }
    } else if (*cv_cmd) {
      const auto s = train::crossval(data_dir, config_or_default(config_path), k, out_dir, quiet ? nullptr : &std::cerr);
      std::fputs(s.csv().c_str(), stdout);
      for (const auto& f : s.folds)
        if (!f.ok) std::fprintf(stderr, "fold %zu failed: %s\n", f.index, f.error.c_str());
      if (s.partial) return 1;
    } else if (*synth_cmd) {
      const auto samples = data::make_synthetic(out_dir, {n, size, seed});
      std::printf("wrote %zu images to %s\n", samples.size(), out_dir.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
