#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "pseg/diff/tensor.hpp"

namespace pseg::diff {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // 0 checks every coordinate; otherwise a seeded random subset of this size.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double denominator_floor = 1e-8;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool finite = true;
  bool passed = false;
  std::string message;
};

// Compares the reverse-mode gradient of a scalar function against central
// finite differences at `input`.
GradCheckReport grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& fn,
                           const Tensor<double>& input, GradCheckOptions options = {});

// Same check with respect to an existing leaf (e.g. a layer weight) that
// `objective` reads. The leaf's values are perturbed in place and restored.
GradCheckReport grad_check_wrt(const std::function<Tensor<double>()>& objective, Tensor<double> wrt,
                               GradCheckOptions options = {});

}  // namespace pseg::diff
