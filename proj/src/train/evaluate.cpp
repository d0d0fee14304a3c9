#include "pseg/train/evaluate.hpp"

#include <algorithm>
#include <iterator>

#include "pseg/data/dataset.hpp"
#include "pseg/data/image_io.hpp"
#include "pseg/error.hpp"

namespace pseg::train {

EvalResult evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                         post::DiceAggregation aggregation) {
  const auto pred_ids = data::list_png_ids(pred_dir), gt_ids = data::list_png_ids(gt_dir);
  if (pred_ids != gt_ids) {
    std::vector<std::string> only_pred, only_gt;
    std::set_difference(pred_ids.begin(), pred_ids.end(), gt_ids.begin(), gt_ids.end(), std::back_inserter(only_pred));
    std::set_difference(gt_ids.begin(), gt_ids.end(), pred_ids.begin(), pred_ids.end(), std::back_inserter(only_gt));
    std::string msg = "prediction and ground-truth ids differ;";
    msg += " only in predictions:";
    for (const auto& id : only_pred) msg += " " + id;
    msg += "; only in ground truth:";
    for (const auto& id : only_gt) msg += " " + id;
    throw LookupError(msg);
  }
  std::vector<data::TissueMask> preds, gts;
  for (const auto& id : pred_ids) {
    preds.push_back(data::read_png_mask(pred_dir / (id + ".png")));
    auto gt = data::read_png_mask(gt_dir / (id + ".png"));
    if (gt.height != preds.back().height || gt.width != preds.back().width) {
      gt = data::resize_nearest(gt, preds.back().height, preds.back().width);
    }
    gts.push_back(std::move(gt));
  }
  return {post::dice_report(preds, gts, aggregation), pred_ids, post::per_image_csv(pred_ids, preds, gts)};
}

}  // namespace pseg::train
