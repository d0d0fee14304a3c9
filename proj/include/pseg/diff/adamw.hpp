#pragma once

#include <cstdint>
#include <vector>

#include "pseg/diff/tensor.hpp"

namespace pseg::diff {

struct AdamWOptions {
  double lr = 1e-3;
  double weight_decay = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Decoupled weight decay (the decay multiplies the parameter, not the
// gradient) followed by a bias-corrected Adam update.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Tensor<T>> params, AdamWOptions options = {});

  // Applies one update from the parameters' grad buffers. Throws
  // NumericError, leaving every parameter untouched, if any gradient is
  // missing or non-finite.
  void step();
  void zero_grad();

  std::uint64_t step_count() const noexcept { return step_; }
  const AdamWOptions& options() const noexcept { return options_; }
  void set_lr(double lr) noexcept { options_.lr = lr; }
  const std::vector<std::vector<T>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<T>>& second_moments() const noexcept { return v_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamWOptions options_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace pseg::diff
