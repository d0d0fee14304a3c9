#pragma once

#include <cstddef>
#include <cstdint>

#include "pseg/diff/checkpoint.hpp"
#include "pseg/diff/conv_spec.hpp"
#include "pseg/diff/layers.hpp"
#include "pseg/diff/tensor.hpp"

namespace pseg::ptc {

// Progressive transposed convolution head: two transposed convolutions
// (16 -> 32 -> 224 by default) then a 1x1 convolution down to one channel
// per tissue class, each followed by a sigmoid.
struct PtcConfig {
  std::size_t embed_dim = 1280;
  std::size_t hidden1 = 320;
  std::size_t hidden2 = 64;
  std::size_t out_channels = 5;

  std::size_t stage1_kernel = 4;
  std::size_t stage1_stride = 2;
  std::size_t stage1_padding = 1;
  std::size_t stage2_kernel = 7;
  std::size_t stage2_stride = 7;
  std::size_t stage2_padding = 0;

  std::size_t grid_side = 16;
  std::size_t output_side = 224;

  diff::ConvSpec stage1() const;
  diff::ConvSpec stage2() const;
  diff::ConvSpec head() const;

  // Spatial size produced from a grid of the given side.
  std::size_t output_side_for(std::size_t grid) const;
  // Rejects configs whose composed map is not grid_side -> output_side or
  // whose head does not emit exactly 5 channels.
  void validate() const;
};

template <typename T>
class Ptc {
 public:
  Ptc(const PtcConfig& config, std::uint64_t seed);

  // C×g×g or N×C×g×g token grid -> 5×(14g)×(14g) maps in (0, 1).
  diff::Tensor<T> forward(const diff::Tensor<T>& grid) const;

  const PtcConfig& config() const noexcept { return config_; }
  // "ptc.stage1.*", "ptc.stage2.*", "ptc.head.*"
  diff::NamedParameters<T> named_parameters() const;

 private:
  PtcConfig config_;
  diff::ConvLayer<T> stage1_;
  diff::ConvLayer<T> stage2_;
  diff::ConvLayer<T> head_;
};

// PTC maps first (channels 0-4), then RGB (channels 5-7).
template <typename T>
diff::Tensor<T> fuse(const diff::Tensor<T>& ptc_out, const diff::Tensor<T>& image);

extern template class Ptc<float>;
extern template class Ptc<double>;

}  // namespace pseg::ptc
