#pragma once

#include <cstdint>
#include <string>

#include "pseg/diff/checkpoint.hpp"
#include "pseg/diff/conv_spec.hpp"
#include "pseg/diff/tensor.hpp"

namespace pseg::diff {

// A (transposed) convolution with its own trainable weight and bias.
// Weights are Kaiming-uniform over the fan-in, biases start at zero.
template <typename T>
struct ConvLayer {
  ConvSpec spec;
  Tensor<T> weight;
  Tensor<T> bias;

  ConvLayer() = default;
  ConvLayer(const ConvSpec& spec, std::uint64_t seed);

  Tensor<T> operator()(const Tensor<T>& x) const;
  // Adds "<prefix>.weight" and "<prefix>.bias".
  void append_parameters(const std::string& prefix, NamedParameters<T>& out) const;
};

extern template struct ConvLayer<float>;
extern template struct ConvLayer<double>;

}  // namespace pseg::diff
