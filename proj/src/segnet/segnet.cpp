#include "pseg/segnet/segnet.hpp"

#include <algorithm>

#include "pseg/diff/ops.hpp"
#include "pseg/error.hpp"
#include "pseg/rng.hpp"

namespace pseg::segnet {

using diff::ConvLayer;
using diff::ConvSpec;
using diff::Tensor;

void SegNetConfig::validate() const {
  if (encoder_widths.empty()) throw ShapeError("SegNetConfig: at least one encoder level is required");
  if (encoder_widths.size() != decoder_widths.size()) {
    throw ShapeError("SegNetConfig: " + std::to_string(encoder_widths.size()) + " encoder levels but " +
                     std::to_string(decoder_widths.size()) + " decoder blocks; skips must pair one-to-one");
  }
  auto positive = [](std::size_t v) { return v > 0; };
  if (!std::all_of(encoder_widths.begin(), encoder_widths.end(), positive) ||
      !std::all_of(decoder_widths.begin(), decoder_widths.end(), positive) || in_channels == 0 ||
      out_channels == 0 || scse_reduction == 0) {
    throw ShapeError("SegNetConfig: widths, channel counts and reduction must be positive");
  }
  std::size_t side = input_size;
  for (std::size_t level = 0; level < depth(); ++level) {
    if (side == 0 || side % 2 != 0) {
      throw ShapeError("SegNetConfig: input size " + std::to_string(input_size) + " is not divisible by 2 at downsampling " +
                       std::to_string(level + 1));
    }
    side /= 2;
  }
}

template <typename T>
Scse<T>::Scse(std::size_t channels, std::size_t reduction, std::uint64_t seed) : channels_(channels) {
  const std::size_t hidden = std::max<std::size_t>(1, channels / reduction);
  squeeze_ = ConvLayer<T>(ConvSpec::conv(channels, hidden, 1), derive_seed(seed, "squeeze"));
  excite_ = ConvLayer<T>(ConvSpec::conv(hidden, channels, 1), derive_seed(seed, "excite"));
  spatial_ = ConvLayer<T>(ConvSpec::conv(channels, 1, 1), derive_seed(seed, "spatial"));
}

template <typename T>
Tensor<T> Scse<T>::forward(const Tensor<T>& x) const {
  const auto channel_gate = diff::sigmoid(excite_(diff::silu(squeeze_(diff::global_avg_pool(x)))));
  const auto spatial_gate = diff::sigmoid(spatial_(x));
  return diff::add(diff::mul_broadcast(x, channel_gate), diff::mul_broadcast(x, spatial_gate));
}

template <typename T>
void Scse<T>::append_parameters(const std::string& prefix, diff::NamedParameters<T>& out) const {
  squeeze_.append_parameters(prefix + ".cse_squeeze", out);
  excite_.append_parameters(prefix + ".cse_excite", out);
  spatial_.append_parameters(prefix + ".sse", out);
}

template <typename T>
SegNet<T>::SegNet(const SegNetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto& enc = config_.encoder_widths;
  const auto& dec = config_.decoder_widths;
  const std::size_t depth = config_.depth();

  auto conv3 = [&](std::size_t in, std::size_t out, std::size_t stride, const std::string& tag) {
    return ConvLayer<T>(ConvSpec::conv(in, out, 3, stride, 1), derive_seed(seed, tag));
  };

  std::size_t channels = config_.in_channels;
  for (std::size_t level = 0; level < depth; ++level) {
    const std::string tag = "enc" + std::to_string(level);
    encoder_.push_back({conv3(channels, enc[level], level == 0 ? 1 : 2, tag + ".conv1"),
                        conv3(enc[level], enc[level], 1, tag + ".conv2")});
    channels = enc[level];
  }
  bottleneck_ = {conv3(channels, channels, 2, "bottleneck.conv1"), conv3(channels, channels, 1, "bottleneck.conv2")};

  for (std::size_t block = 0; block < depth; ++block) {
    const std::size_t skip = enc[depth - 1 - block];
    const std::size_t joined = channels + skip;
    const std::string tag = "dec" + std::to_string(block);
    decoder_.push_back({Scse<T>(joined, config_.scse_reduction, derive_seed(seed, tag + ".attention1")),
                        conv3(joined, dec[block], 1, tag + ".conv1"), conv3(dec[block], dec[block], 1, tag + ".conv2"),
                        Scse<T>(dec[block], config_.scse_reduction, derive_seed(seed, tag + ".attention2"))});
    channels = dec[block];
  }
  head_ = ConvLayer<T>(ConvSpec::conv(channels, config_.out_channels, 1), derive_seed(seed, "head"));
}

template <typename T>
Tensor<T> SegNet<T>::forward(const Tensor<T>& x) const {
  if (x.rank() != 3 && x.rank() != 4) throw ShapeError("segnet: expected C×H×W or N×C×H×W input");
  const std::size_t r = x.rank();
  if (x.dim(r - 3) != config_.in_channels) {
    throw ShapeError("segnet: input has " + std::to_string(x.dim(r - 3)) + " channels, expected " +
                     std::to_string(config_.in_channels));
  }
  const std::size_t factor = std::size_t{1} << config_.depth();
  if (x.dim(r - 1) % factor != 0 || x.dim(r - 2) % factor != 0 || x.dim(r - 1) == 0 || x.dim(r - 2) == 0) {
    throw ShapeError("segnet: spatial size " + diff::to_string(x.shape()) + " is not divisible by " +
                     std::to_string(factor));
  }

  std::vector<Tensor<T>> skips;
  Tensor<T> h = x;
  for (const auto& level : encoder_) {
    h = diff::silu(level.second(diff::silu(level.first(h))));
    skips.push_back(h);
  }
  h = diff::silu(bottleneck_.second(diff::silu(bottleneck_.first(h))));

  for (std::size_t block = 0; block < decoder_.size(); ++block) {
    const auto& d = decoder_[block];
    h = diff::concat_channels(diff::upsample_nearest(h, 2), skips[skips.size() - 1 - block]);
    h = d.attend_input.forward(h);
    h = diff::silu(d.second(diff::silu(d.first(h))));
    h = d.attend_output.forward(h);
  }
  return diff::sigmoid(head_(h));
}

template <typename T>
diff::NamedParameters<T> SegNet<T>::named_parameters() const {
  diff::NamedParameters<T> out;
  for (std::size_t level = 0; level < encoder_.size(); ++level) {
    const std::string tag = "segnet.enc" + std::to_string(level);
    encoder_[level].first.append_parameters(tag + ".conv1", out);
    encoder_[level].second.append_parameters(tag + ".conv2", out);
  }
  bottleneck_.first.append_parameters("segnet.bottleneck.conv1", out);
  bottleneck_.second.append_parameters("segnet.bottleneck.conv2", out);
  for (std::size_t block = 0; block < decoder_.size(); ++block) {
    const std::string tag = "segnet.dec" + std::to_string(block);
    decoder_[block].attend_input.append_parameters(tag + ".attention1", out);
    decoder_[block].first.append_parameters(tag + ".conv1", out);
    decoder_[block].second.append_parameters(tag + ".conv2", out);
    decoder_[block].attend_output.append_parameters(tag + ".attention2", out);
  }
  head_.append_parameters("segnet.head", out);
  return out;
}

template class Scse<float>;
template class Scse<double>;
template class SegNet<float>;
template class SegNet<double>;

}  // namespace pseg::segnet
