#include "pseg/diff/layers.hpp"

#include <cmath>

#include "pseg/diff/ops.hpp"
#include "pseg/rng.hpp"

namespace pseg::diff {

template <typename T>
ConvLayer<T>::ConvLayer(const ConvSpec& s, std::uint64_t seed) : spec(s) {
  spec.validate();
  const Shape shape = spec.weight_shape();
  const double bound = std::sqrt(6.0 / spec.fan_in());
  Rng rng(seed);
  std::vector<T> w(numel(shape));
  for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
  weight = Tensor<T>::from(shape, std::move(w), true);
  bias = Tensor<T>::zeros({spec.out_channels}, true);
}

template <typename T>
Tensor<T> ConvLayer<T>::operator()(const Tensor<T>& x) const {
  return spec.transposed ? conv_transpose2d(x, spec, weight, bias) : conv2d(x, spec, weight, bias);
}

template <typename T>
void ConvLayer<T>::append_parameters(const std::string& prefix, NamedParameters<T>& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

template struct ConvLayer<float>;
template struct ConvLayer<double>;

}  // namespace pseg::diff
