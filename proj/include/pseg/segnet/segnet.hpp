#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pseg/diff/checkpoint.hpp"
#include "pseg/diff/layers.hpp"
#include "pseg/diff/tensor.hpp"

namespace pseg::segnet {

struct SegNetConfig {
  // Channel width per encoder level. Level 0 runs at full resolution; each
  // further level and the bottleneck halve the spatial size.
  std::vector<std::size_t> encoder_widths{16, 32, 64, 128};
  // Decoder block widths, deepest first (mirror of the encoder).
  std::vector<std::size_t> decoder_widths{128, 64, 32, 16};
  std::size_t scse_reduction = 8;
  std::size_t in_channels = 8;
  std::size_t out_channels = 5;
  std::size_t input_size = 224;

  std::size_t depth() const noexcept { return encoder_widths.size(); }
  // Every spatial size must stay even down to the bottleneck.
  void validate() const;
};

// Concurrent spatial and channel squeeze & excitation: x * cSE(x) + x * sSE(x).
template <typename T>
class Scse {
 public:
  Scse() = default;
  Scse(std::size_t channels, std::size_t reduction, std::uint64_t seed);

  diff::Tensor<T> forward(const diff::Tensor<T>& x) const;
  void append_parameters(const std::string& prefix, diff::NamedParameters<T>& out) const;

  std::size_t channels() const noexcept { return channels_; }

 private:
  std::size_t channels_ = 0;
  diff::ConvLayer<T> squeeze_;
  diff::ConvLayer<T> excite_;
  diff::ConvLayer<T> spatial_;
};

// Encoder-decoder with U-Net skips and SCSE-gated decoder blocks. Emits
// per-class sigmoid probabilities.
template <typename T>
class SegNet {
 public:
  SegNet(const SegNetConfig& config, std::uint64_t seed);

  // in_channels×H×W (or batched) -> out_channels×H×W, H and W divisible by
  // 2^depth.
  diff::Tensor<T> forward(const diff::Tensor<T>& x) const;

  const SegNetConfig& config() const noexcept { return config_; }
  // Everything under "segnet.".
  diff::NamedParameters<T> named_parameters() const;

 private:
  struct EncoderLevel {
    diff::ConvLayer<T> first;  // stride 2 on every level but the first
    diff::ConvLayer<T> second;
  };
  struct DecoderBlock {
    Scse<T> attend_input;
    diff::ConvLayer<T> first;
    diff::ConvLayer<T> second;
    Scse<T> attend_output;
  };

  SegNetConfig config_;
  std::vector<EncoderLevel> encoder_;
  EncoderLevel bottleneck_;
  std::vector<DecoderBlock> decoder_;
  diff::ConvLayer<T> head_;
};

template <typename T>
diff::Tensor<T> scse_block(const Scse<T>& block, const diff::Tensor<T>& x) {
  return block.forward(x);
}

extern template class Scse<float>;
extern template class Scse<double>;
extern template class SegNet<float>;
extern template class SegNet<double>;

}  // namespace pseg::segnet
