#include "pseg/post/metrics.hpp"

#include <cstdio>
#include <string>

#include "pseg/error.hpp"

namespace pseg::post {

using data::kNumForegroundClasses;
using data::TissueMask;

void DiceCounts::add(const TissueMask& pred, const TissueMask& gt) {
  pred.validate();
  gt.validate();
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("dice: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                     " and ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width) + " differ");
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto p = pred.labels[i], g = gt.labels[i];
    if (p > 0) ++predicted[p - 1];
    if (g > 0) ++truth[g - 1];
    if (p > 0 && p == g) ++intersection[p - 1];
  }
}

std::array<double, kNumForegroundClasses> DiceCounts::dice() const {
  std::array<double, kNumForegroundClasses> out{};
  for (std::size_t c = 0; c < kNumForegroundClasses; ++c) {
    const std::uint64_t denom = predicted[c] + truth[c];
    out[c] = denom == 0 ? 1.0 : 2.0 * static_cast<double>(intersection[c]) / static_cast<double>(denom);
  }
  return out;
}

namespace {

double mean5(const std::array<double, kNumForegroundClasses>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(kNumForegroundClasses);
}

}  // namespace

DiceReport dice_report(const std::vector<TissueMask>& preds, const std::vector<TissueMask>& gts,
                       DiceAggregation aggregation) {
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("dice_report: " + std::to_string(preds.size()) + " predictions for " +
                                std::to_string(gts.size()) + " ground-truth masks");
  }
  DiceReport report;
  report.n_images = preds.size();
  if (aggregation == DiceAggregation::Micro) {
    DiceCounts counts;
    for (std::size_t i = 0; i < preds.size(); ++i) counts.add(preds[i], gts[i]);
    report.per_class = counts.dice();
  } else {
    if (preds.empty()) {
      report.per_class.fill(1.0);
    } else {
      for (std::size_t i = 0; i < preds.size(); ++i) {
        DiceCounts counts;
        counts.add(preds[i], gts[i]);
        const auto d = counts.dice();
        for (std::size_t c = 0; c < kNumForegroundClasses; ++c) report.per_class[c] += d[c];
      }
      for (auto& v : report.per_class) v /= static_cast<double>(preds.size());
    }
  }
  report.micro_average = mean5(report.per_class);
  return report;
}

std::string report_csv(const DiceReport& report) {
  std::string out = "class,dice\n";
  char buf[64];
  for (std::size_t c = 0; c < kNumForegroundClasses; ++c) {
    std::snprintf(buf, sizeof buf, ",%.6f\n", report.per_class[c]);
    out += std::string(data::class_name(c + 1)) + buf;
  }
  std::snprintf(buf, sizeof buf, "micro_average,%.6f\n", report.micro_average);
  return out + buf;
}

std::string per_image_csv(const std::vector<std::string>& ids, const std::vector<TissueMask>& preds,
                          const std::vector<TissueMask>& gts) {
  if (ids.size() != preds.size() || preds.size() != gts.size()) {
    throw std::invalid_argument("per_image_csv: id, prediction and ground-truth counts differ");
  }
  std::string out = "id";
  for (std::size_t c = 1; c <= kNumForegroundClasses; ++c) out += "," + std::string(data::class_name(c));
  out += ",mean\n";
  char buf[32];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    DiceCounts counts;
    counts.add(preds[i], gts[i]);
    const auto d = counts.dice();
    out += ids[i];
    for (double v : d) {
      std::snprintf(buf, sizeof buf, ",%.6f", v);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, ",%.6f\n", mean5(d));
    out += buf;
  }
  return out;
}

}  // namespace pseg::post
