#include "pseg/diff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "pseg/error.hpp"
#include "pseg/rng.hpp"

namespace pseg::diff {

namespace {

std::vector<std::size_t> pick_coordinates(std::size_t n, const GradCheckOptions& options) {
  std::vector<std::size_t> idx;
  if (options.max_coordinates == 0 || options.max_coordinates >= n) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  Rng rng(derive_seed(options.seed, "grad_check"));
  std::unordered_set<std::size_t> seen;
  while (idx.size() < options.max_coordinates) {
    const std::size_t i = rng.below(n);
    if (seen.insert(i).second) idx.push_back(i);
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

double scalar_of(const Tensor<double>& t) {
  if (!t.defined() || t.numel() != 1) throw ShapeError("grad_check: objective must return a scalar");
  return t.item();
}

}  // namespace

GradCheckReport grad_check_wrt(const std::function<Tensor<double>()>& objective, Tensor<double> wrt,
                               GradCheckOptions options) {
  GradCheckReport report;
  const bool was_tracked = wrt.requires_grad();
  wrt.set_requires_grad(true);
  wrt.zero_grad();

  const Tensor<double> out = objective();
  if (!std::isfinite(scalar_of(out))) {
    report.finite = false;
    report.message = "objective is non-finite at the evaluation point";
    wrt.set_requires_grad(was_tracked);
    return report;
  }
  out.backward();
  std::vector<double> analytic(wrt.numel(), 0.0);
  if (wrt.has_grad()) std::copy(wrt.grad().begin(), wrt.grad().end(), analytic.begin());

  auto values = wrt.mutable_data();
  {
    NoGradGuard no_grad;
    for (std::size_t i : pick_coordinates(wrt.numel(), options)) {
      const double original = values[i];
      values[i] = original + options.step;
      const double plus = scalar_of(objective());
      values[i] = original - options.step;
      const double minus = scalar_of(objective());
      values[i] = original;

      const double numeric = (plus - minus) / (2.0 * options.step);
      ++report.coordinates_checked;
      if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
        report.finite = false;
        report.worst_index = i;
        continue;
      }
      const double abs_err = std::abs(analytic[i] - numeric);
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), options.denominator_floor});
      const double rel = abs_err / denom;
      report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_index = i;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric;
      }
    }
  }
  if (wrt.has_grad()) wrt.zero_grad();
  wrt.set_requires_grad(was_tracked);

  report.passed = report.finite && report.max_relative_error < options.tolerance;
  std::ostringstream os;
  os << "checked " << report.coordinates_checked << " coordinates, max relative error "
     << report.max_relative_error << " at index " << report.worst_index << " (analytic "
     << report.worst_analytic << ", numeric " << report.worst_numeric << ")"
     << (report.finite ? "" : " (non-finite values encountered)");
  report.message = os.str();
  return report;
}

GradCheckReport grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& fn,
                           const Tensor<double>& input, GradCheckOptions options) {
  Tensor<double> x = Tensor<double>::from(input.shape(), {input.data().begin(), input.data().end()}, true);
  return grad_check_wrt([&] { return fn(x); }, x, options);
}

}  // namespace pseg::diff
