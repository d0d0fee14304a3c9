#include "pseg/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pseg/diff/ops.hpp"
#include "pseg/error.hpp"

namespace pseg::losses {

using diff::Node;
using diff::Tensor;

namespace {

struct Layout {
  std::size_t samples = 1;
  std::size_t channels = 1;
  std::size_t plane = 1;
};

template <typename T>
Layout check_pair(const char* op, const Tensor<T>& p, const Tensor<T>& g) {
  if (!p.defined() || !g.defined() || p.shape() != g.shape()) {
    throw ShapeError(std::string(op) + ": prediction " + (p.defined() ? diff::to_string(p.shape()) : "<none>") +
                     " and target " + (g.defined() ? diff::to_string(g.shape()) : "<none>") +
                     " shapes differ");
  }
  const auto& s = p.shape();
  if (s.size() == 3) return {1, s[0], s[1] * s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2] * s[3]};
  throw ShapeError(std::string(op) + ": expected C×H×W or N×C×H×W, got " + diff::to_string(s));
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("loss alpha must lie in (0, 1)");
  if (!(gamma >= 0.0)) throw std::invalid_argument("loss gamma must be non-negative");
  if (!(epsilon > 0.0)) throw std::invalid_argument("loss epsilon must be positive");
  if (!(dice_weight > 0.0) || !(ptc_weight >= 0.0)) {
    throw std::invalid_argument("loss weights must be positive (ptc_weight may be 0)");
  }
}

template <typename T>
OneHotTarget<T> OneHotTarget<T>::from_mask(const data::TissueMask& mask) {
  mask.validate();
  const std::size_t plane = mask.size();
  std::vector<T> v(data::kNumForegroundClasses * plane, T{0});
  for (std::size_t i = 0; i < plane; ++i) {
    const auto label = mask.labels[i];
    if (label > 0) v[(label - 1) * plane + i] = T{1};
  }
  return {Tensor<T>::from({data::kNumForegroundClasses, mask.height, mask.width}, std::move(v))};
}

template <typename T>
OneHotTarget<T> OneHotTarget<T>::from_masks(const std::vector<data::TissueMask>& masks) {
  std::vector<Tensor<T>> items;
  items.reserve(masks.size());
  for (const auto& m : masks) items.push_back(from_mask(m).values);
  return {diff::stack(items)};
}

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& p, const Tensor<T>& g, double epsilon, DiceReduction reduction) {
  const Layout l = check_pair("dice_loss", p, g);
  // Each "group" is one Dice computation: a channel, or a whole sample.
  const std::size_t group_len = reduction == DiceReduction::PerChannel ? l.plane : l.channels * l.plane;
  const std::size_t groups = p.numel() / group_len;

  struct Sums {
    double intersection, denominator;
  };
  std::vector<Sums> sums(groups);
  double total = 0.0;
  for (std::size_t k = 0; k < groups; ++k) {
    double inter = 0.0, ps = 0.0, gs = 0.0;
    const std::size_t base = k * group_len;
    for (std::size_t i = 0; i < group_len; ++i) {
      const double pv = p[base + i], gv = g[base + i];
      inter += pv * gv;
      ps += pv;
      gs += gv;
    }
    sums[k] = {inter, ps + gs + epsilon};
    total += 1.0 - 2.0 * inter / sums[k].denominator;
  }
  const double inv_groups = 1.0 / static_cast<double>(groups);
  return diff::make_result<T>({1}, {static_cast<T>(total * inv_groups)}, {p.node()},
                              [sums, group_len, inv_groups, target = g](Node<T>& self) {
                                auto& grad = self.parents[0]->ensure_grad();
                                const double up = static_cast<double>(self.grad[0]) * inv_groups;
                                for (std::size_t k = 0; k < sums.size(); ++k) {
                                  const double s = sums[k].denominator;
                                  const double inter = sums[k].intersection;
                                  const std::size_t base = k * group_len;
                                  for (std::size_t i = 0; i < group_len; ++i) {
                                    const double gv = target[base + i];
                                    grad[base + i] += static_cast<T>(up * -(2.0 * gv * s - 2.0 * inter) / (s * s));
                                  }
                                }
                              });
}

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& p, const Tensor<T>& g, double alpha, double gamma, FocalReduction reduction) {
  check_pair("focal_loss", p, g);
  const double lo = kProbabilityClamp, hi = 1.0 - kProbabilityClamp;
  double total = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double pv = std::clamp(static_cast<double>(p[i]), lo, hi);
    if (g[i] >= T{0.5}) {
      total += -alpha * std::pow(1.0 - pv, gamma) * std::log(pv);
    } else {
      total += -(1.0 - alpha) * std::pow(pv, gamma) * std::log(1.0 - pv);
    }
  }
  const double scale = reduction == FocalReduction::Mean ? 1.0 / static_cast<double>(p.numel()) : 1.0;
  return diff::make_result<T>(
      {1}, {static_cast<T>(total * scale)}, {p.node()}, [alpha, gamma, scale, lo, hi, target = g](Node<T>& self) {
        auto& parent = *self.parents[0];
        auto& grad = parent.ensure_grad();
        const double up = static_cast<double>(self.grad[0]) * scale;
        for (std::size_t i = 0; i < grad.size(); ++i) {
          const double raw = parent.data[i];
          if (raw < lo || raw > hi) continue;  // clamped: flat
          const double pv = raw;
          double d;
          if (target[i] >= T{0.5}) {
            // d/dp [-a (1-p)^g log p]
            d = alpha * gamma * std::pow(1.0 - pv, gamma - 1.0) * std::log(pv) - alpha * std::pow(1.0 - pv, gamma) / pv;
          } else {
            // d/dp [-(1-a) p^g log(1-p)]
            d = -(1.0 - alpha) * (gamma * std::pow(pv, gamma - 1.0) * std::log(1.0 - pv) - std::pow(pv, gamma) / (1.0 - pv));
          }
          grad[i] += static_cast<T>(up * d);
        }
      });
}

template <typename T>
Tensor<T> dice_fl(const Tensor<T>& p, const Tensor<T>& g, const LossConfig& config) {
  return diff::add(diff::scale(dice_loss(p, g, config.epsilon, config.dice_reduction), config.dice_weight),
                   focal_loss(p, g, config.alpha, config.gamma, config.focal_reduction));
}

template <typename T>
Tensor<T> combine_stages(const Tensor<T>& l_ptc, const Tensor<T>& l_output, double ptc_weight) {
  return diff::add(diff::scale(l_ptc, ptc_weight), l_output);
}

template <typename T>
DualStageLoss<T> dual_stage_loss(const Tensor<T>& ptc_out, const Tensor<T>& seg_out, const Tensor<T>& g,
                                 const LossConfig& config) {
  DualStageLoss<T> out;
  out.ptc = dice_fl(ptc_out, g, config);
  out.output = dice_fl(seg_out, g, config);
  out.total = combine_stages(out.ptc, out.output, config.ptc_weight);
  return out;
}

#define PSEG_INSTANTIATE_LOSSES(T)                                                                \
  template struct OneHotTarget<T>;                                                                \
  template Tensor<T> dice_loss(const Tensor<T>&, const Tensor<T>&, double, DiceReduction);        \
  template Tensor<T> focal_loss(const Tensor<T>&, const Tensor<T>&, double, double, FocalReduction); \
  template Tensor<T> dice_fl(const Tensor<T>&, const Tensor<T>&, const LossConfig&);              \
  template Tensor<T> combine_stages(const Tensor<T>&, const Tensor<T>&, double);                  \
  template DualStageLoss<T> dual_stage_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                            const LossConfig&);

PSEG_INSTANTIATE_LOSSES(float)
PSEG_INSTANTIATE_LOSSES(double)

}  // namespace pseg::losses
