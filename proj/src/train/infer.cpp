#include "pseg/train/infer.hpp"

#include <cmath>

#include "pseg/data/dataset.hpp"
#include "pseg/diff/ops.hpp"
#include "pseg/error.hpp"
#include "pseg/train/pipeline.hpp"

namespace pseg::train {

namespace fs = std::filesystem;

data::RgbImage overlay(const data::RgbImage& image, const data::TissueMask& mask) {
  if (image.height != mask.height || image.width != mask.width) throw ShapeError("overlay: image and mask sizes differ");
  data::RgbImage out = image;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const Rgba c = kOverlayPalette.at(mask.labels[i]);
    const double a = c.a / 255.0;
    const std::uint8_t rgb[3] = {c.r, c.g, c.b};
    for (std::size_t k = 0; k < 3; ++k) {
      auto& px = out.pixels[3 * i + k];
      px = static_cast<std::uint8_t>(std::lround((1 - a) * px + a * rgb[k]));
    }
  }
  return out;
}

namespace {

void write_channels(const fs::path& dir, const std::string& id, const char* kind, const diff::Tensor<float>& maps) {
  const std::size_t h = maps.dim(1), w = maps.dim(2), plane = h * w;
  for (std::size_t c = 0; c < maps.dim(0); ++c) {
    std::vector<std::uint8_t> gray(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      gray[i] = static_cast<std::uint8_t>(std::lround(std::clamp(maps[c * plane + i], 0.0f, 1.0f) * 255.0f));
    }
    data::write_png_gray(dir / (id + "_" + kind + "_" + std::string(data::class_name(c + 1)) + ".png"), h, w, gray);
  }
}

}  // namespace

InferSummary run_inference(const InferRequest& req) {
  const auto pipeline = Pipeline::load(req.checkpoint);
  InferOptions options = pipeline.config().infer;
  if (req.postprocess) options.postprocess = *req.postprocess;
  const auto source = tokens::make_token_source(req.tokens.value_or(pipeline.config().token_source));
  const std::size_t side = pipeline.config().ptc.output_side;

  fs::create_directories(req.out / "masks");
  if (req.emit_overlays) fs::create_directories(req.out / "overlays");
  if (req.emit_heatmaps) fs::create_directories(req.out / "heatmaps");

  InferSummary summary;
  for (const auto& id : data::list_png_ids(req.images)) {
    try {
      const auto rgb = data::read_png_rgb(req.images / (id + ".png"));
      if (rgb.height != rgb.width) throw ShapeError("image is not square");
      auto image = data::to_tensor(rgb);
      if (rgb.height != side) image = diff::bilinear_resize(image, side, side);
      const auto pred = predict(pipeline, token_grid(*source, image, id), image, options);
      data::write_png_mask(req.out / "masks" / (id + ".png"), pred.mask);
      if (req.emit_overlays) {
        data::write_png_rgb(req.out / "overlays" / (id + ".png"), overlay(data::to_rgb(image), pred.mask));
      }
      if (req.emit_heatmaps) {
        write_channels(req.out / "heatmaps", id, "ptc", pred.ptc);
        write_channels(req.out / "heatmaps", id, "prob", pred.probabilities);
      }
      summary.written.push_back(id);
    } catch (const std::exception& e) {
      summary.skipped.emplace_back(id, e.what());
    }
  }
  return summary;
}

}  // namespace pseg::train
