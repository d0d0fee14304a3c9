#include "pseg/train/pipeline.hpp"

#include "pseg/error.hpp"
#include "pseg/post/postprocess.hpp"
#include "pseg/rng.hpp"

namespace pseg::train {

using diff::Tensor;

namespace {
const TrainConfig& checked(const TrainConfig& c) {
  c.validate();
  return c;
}
}  // namespace

Pipeline::Pipeline(const TrainConfig& config)
    : config_(checked(config)),
      ptc_(config.ptc, derive_seed(config.seed, "init.ptc")),
      segnet_(config.segnet, derive_seed(config.seed, "init.segnet")) {}

StageOutputs Pipeline::forward(const Tensor<float>& grid, const Tensor<float>& image) const {
  StageOutputs out;
  out.ptc = ptc_.forward(grid);
  out.seg = segnet_.forward(ptc::fuse(out.ptc, image));
  return out;
}

diff::NamedParameters<float> Pipeline::named_parameters() const {
  auto params = ptc_.named_parameters();
  for (auto& p : segnet_.named_parameters()) params.push_back(std::move(p));
  return params;
}

std::vector<Tensor<float>> Pipeline::parameters() const {
  std::vector<Tensor<float>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::filesystem::path config_sidecar(const std::filesystem::path& checkpoint) {
  return checkpoint.string() + ".cfg";
}

void Pipeline::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  diff::save_parameters(path, named_parameters());
  save_config(config_sidecar(path), config_);
}

Pipeline Pipeline::load(const std::filesystem::path& path) {
  const auto cfg = config_sidecar(path);
  if (!std::filesystem::exists(cfg)) throw IoError("checkpoint config " + cfg.string() + " not found");
  Pipeline p(load_config(cfg));
  auto params = p.named_parameters();
  diff::load_parameters(path, params);
  return p;
}

Tensor<float> token_grid(const tokens::TokenSource& source, const Tensor<float>& image, const std::string& image_id) {
  return tokens::permute_tokens(source.extract(image, image_id)).values;
}

Prediction predict(const Pipeline& pipeline, const Tensor<float>& grid, const Tensor<float>& image,
                   const InferOptions& options) {
  diff::NoGradGuard no_grad;
  diff::FlushDenormalsGuard ftz;
  auto out = pipeline.forward(grid, image);
  Prediction p;
  p.ptc = out.ptc;
  p.probabilities = out.seg;
  p.raw = post::gate_background(post::argmax_map(out.seg), out.seg, options.background_threshold);
  p.mask = options.postprocess ? post::postprocess(p.raw, post::StructuringElement(options.se_size)) : p.raw;
  return p;
}

}  // namespace pseg::train
