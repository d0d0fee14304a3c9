#include "pseg/ptc/ptc.hpp"

#include <string>

#include "pseg/diff/ops.hpp"
#include "pseg/error.hpp"
#include "pseg/rng.hpp"

namespace pseg::ptc {

using diff::ConvSpec;
using diff::Tensor;

ConvSpec PtcConfig::stage1() const {
  return ConvSpec::deconv(embed_dim, hidden1, stage1_kernel, stage1_stride, stage1_padding);
}

ConvSpec PtcConfig::stage2() const {
  return ConvSpec::deconv(hidden1, hidden2, stage2_kernel, stage2_stride, stage2_padding);
}

ConvSpec PtcConfig::head() const { return ConvSpec::conv(hidden2, out_channels, 1); }

std::size_t PtcConfig::output_side_for(std::size_t grid) const {
  const auto a = stage1().output_size({grid, grid});
  const auto b = stage2().output_size(a);
  return head().output_size(b).h;
}

void PtcConfig::validate() const {
  if (out_channels != 5) {
    throw ShapeError("PTC head must emit 5 channels, configured " + std::to_string(out_channels));
  }
  const std::size_t side = output_side_for(grid_side);
  if (side != output_side) {
    throw ShapeError("PTC stages map " + std::to_string(grid_side) + " -> " + std::to_string(side) +
                     ", expected " + std::to_string(output_side));
  }
}

template <typename T>
Ptc<T>::Ptc(const PtcConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  stage1_ = diff::ConvLayer<T>(config_.stage1(), derive_seed(seed, "ptc.stage1"));
  stage2_ = diff::ConvLayer<T>(config_.stage2(), derive_seed(seed, "ptc.stage2"));
  head_ = diff::ConvLayer<T>(config_.head(), derive_seed(seed, "ptc.head"));
}

template <typename T>
Tensor<T> Ptc<T>::forward(const Tensor<T>& grid) const {
  auto x = diff::sigmoid(stage1_(grid));
  x = diff::sigmoid(stage2_(x));
  return diff::sigmoid(head_(x));
}

template <typename T>
diff::NamedParameters<T> Ptc<T>::named_parameters() const {
  diff::NamedParameters<T> out;
  stage1_.append_parameters("ptc.stage1", out);
  stage2_.append_parameters("ptc.stage2", out);
  head_.append_parameters("ptc.head", out);
  return out;
}

template <typename T>
Tensor<T> fuse(const Tensor<T>& ptc_out, const Tensor<T>& image) {
  const std::size_t r = ptc_out.rank();
  if (r < 3 || image.rank() != r || ptc_out.dim(r - 2) != image.dim(r - 2) ||
      ptc_out.dim(r - 1) != image.dim(r - 1)) {
    throw ShapeError("fuse: spatial mismatch between PTC output " + diff::to_string(ptc_out.shape()) +
                     " and image " + diff::to_string(image.shape()));
  }
  return diff::concat_channels(ptc_out, image);
}

template class Ptc<float>;
template class Ptc<double>;
template Tensor<float> fuse(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> fuse(const Tensor<double>&, const Tensor<double>&);

}  // namespace pseg::ptc
