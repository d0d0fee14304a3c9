#pragma once

#include <cstddef>
#include <vector>

#include "pseg/diff/conv_spec.hpp"
#include "pseg/diff/tensor.hpp"

// Differentiable ops over channel-major tensors. Image-shaped ops accept
// either C×H×W or N×C×H×W; the rank of the result matches the input.
namespace pseg::diff {

// `bias` may be an undefined tensor (no bias term).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weight,
                 const Tensor<T>& bias = {});

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weight,
                           const Tensor<T>& bias = {});

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

// x * sigmoid(x)
template <typename T>
Tensor<T> silu(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor);

// Elementwise product where every dimension of `gate` equals the matching
// dimension of `x` or is 1 (channel gates N×C×1×1, spatial gates N×1×H×W).
template <typename T>
Tensor<T> mul_broadcast(const Tensor<T>& x, const Tensor<T>& gate);

// Mean over H and W, keeping them as size-1 dimensions.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, std::size_t factor);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// Channels [begin, end).
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t end);

// Stacks equally shaped tensors along a new leading dimension.
template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& items);

// Item `index` along the leading dimension.
template <typename T>
Tensor<T> select(const Tensor<T>& x, std::size_t index);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// Half-pixel-center bilinear sampling (align_corners = false), sample
// coordinates clamped to the image edge. Not recorded on the tape.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);

// Inner product of the raw values (no graph).
template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace pseg::diff
