#include "pseg/train/crossval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "pseg/error.hpp"
#include "pseg/tokens/tokens.hpp"
#include "pseg/train/pipeline.hpp"
#include "pseg/train/trainer.hpp"

namespace pseg::train {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = sd = 0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(v.size()));
}

}  // namespace

void summarize(CrossvalSummary& s) {
  s.completed = 0;
  std::array<std::vector<double>, data::kNumForegroundClasses> per_class;
  std::vector<double> micro;
  for (const auto& f : s.folds) {
    if (!f.ok) continue;
    ++s.completed;
    for (std::size_t c = 0; c < per_class.size(); ++c) per_class[c].push_back(f.report.per_class[c]);
    micro.push_back(f.report.micro_average);
  }
  s.partial = s.completed != s.folds.size();
  for (std::size_t c = 0; c < per_class.size(); ++c) mean_std(per_class[c], s.mean[c], s.stddev[c]);
  mean_std(micro, s.micro_mean, s.micro_stddev);
}

std::string CrossvalSummary::csv() const {
  std::string out = "# folds completed: " + std::to_string(completed) + "/" + std::to_string(folds.size()) +
                    (partial ? " (partial)" : "") + "\nclass,mean,std\n";
  char buf[96];
  for (std::size_t c = 0; c < mean.size(); ++c) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f\n", std::string(data::class_name(c + 1)).c_str(), mean[c], stddev[c]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "micro_average,%.6f,%.6f\n", micro_mean, micro_stddev);
  return out + buf;
}

CrossvalSummary crossval(const std::filesystem::path& dataset_root, const TrainConfig& config, std::size_t k,
                         const std::filesystem::path& out_dir, std::ostream* progress) {
  config.validate();
  const auto samples = load_resized(dataset_root, config.ptc.output_side);
  const auto folds = data::kfold_split(samples, k, config.seed);
  std::filesystem::create_directories(out_dir);

  std::map<std::string, const data::Sample*> by_id;
  for (const auto& s : samples) by_id[s.id] = &s;
  std::string assignment = "id,fold\n";
  for (std::size_t i = 0; i < folds.size(); ++i)
    for (const auto& id : folds[i].val_ids) assignment += id + "," + std::to_string(i) + "\n";
  write_text(out_dir / "folds.csv", assignment);

  CrossvalSummary summary;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    FoldResult fr{i, folds[i], false, {}, {}};
    const auto fold_dir = out_dir / ("fold_" + std::to_string(i));
    try {
      std::vector<data::Sample> train_set, val_set;
      for (const auto& id : folds[i].train_ids) train_set.push_back(*by_id.at(id));
      for (const auto& id : folds[i].val_ids) val_set.push_back(*by_id.at(id));
      if (progress) *progress << "fold " << i + 1 << "/" << folds.size() << "\n";
      const auto trained = train_model(train_set, val_set, config, fold_dir, progress);

      const auto pipeline = Pipeline::load(trained.best_checkpoint);
      const auto source = tokens::make_token_source(config.token_source);
      std::vector<data::TissueMask> preds, gts;
      for (const auto& s : val_set) {
        preds.push_back(predict(pipeline, token_grid(*source, s.image, s.id), s.image, config.infer).mask);
        gts.push_back(s.mask);
      }
      fr.report = post::dice_report(preds, gts);
      write_text(fold_dir / "report.csv", post::report_csv(fr.report));
      fr.ok = true;
    } catch (const std::exception& e) {
      fr.error = e.what();
      if (progress) *progress << "fold " << i + 1 << " failed: " << e.what() << "\n";
    }
    summary.folds.push_back(std::move(fr));
  }
  summarize(summary);
  write_text(out_dir / "summary.csv", summary.csv());
  return summary;
}

}  // namespace pseg::train
