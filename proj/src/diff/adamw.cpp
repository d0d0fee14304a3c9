#include "pseg/diff/adamw.hpp"

#include <cmath>
#include <string>

#include "pseg/error.hpp"

namespace pseg::diff {

template <typename T>
AdamW<T>::AdamW(std::vector<Tensor<T>> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), T{0});
    v_.emplace_back(p.numel(), T{0});
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
void AdamW<T>::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto& p = params_[k];
    if (!p.has_grad()) throw NumericError("adamw: parameter " + std::to_string(k) + " has no gradient");
    for (T g : p.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("adamw: non-finite gradient in parameter " + std::to_string(k) +
                           "; step rejected");
      }
    }
  }

  ++step_;
  const double t = static_cast<double>(step_);
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double bias1 = 1.0 - std::pow(b1, t);
  const double bias2 = 1.0 - std::pow(b2, t);
  const double decay = 1.0 - options_.lr * options_.weight_decay;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto values = params_[k].mutable_data();
    const auto grads = params_[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[i];
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = options_.lr * (mi / bias1) / (std::sqrt(vi / bias2) + options_.eps);
      values[i] = static_cast<T>(static_cast<double>(values[i]) * decay - update);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace pseg::diff
