#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "pseg/data/image_io.hpp"
#include "pseg/error.hpp"
#include "pseg/post/postprocess.hpp"
#include "pseg/train/bench.hpp"
#include "pseg/train/crossval.hpp"
#include "pseg/train/evaluate.hpp"
#include "pseg/train/infer.hpp"
#include "pseg/train/pipeline.hpp"
#include "pseg/train/trainer.hpp"
#include "train_fixtures.hpp"

using namespace pseg;
using namespace pseg::train;
namespace fs = std::filesystem;
using fixtures::fresh_dir;
using fixtures::tiny_config;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool bitwise_equal(const diff::Tensor<float>& a, const diff::Tensor<float>& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace

TEST(Config, FormatParseRoundTrip) {
  TrainConfig c = tiny_config();
  c.lr = 0.000123456789;
  c.loss.dice_reduction = losses::DiceReduction::Global;
  c.augment.blur = 0.25;
  c.token_source = tokens::TokenSourceSpec::stub(42);
  c.infer.postprocess = false;
  const auto text = format_config(c);
  const auto back = parse_config(text);
  EXPECT_EQ(format_config(back), text);
  EXPECT_EQ(back.lr, c.lr);
  EXPECT_EQ(back.segnet.encoder_widths, c.segnet.encoder_widths);
  EXPECT_EQ(back.token_source.seed, 42u);
  EXPECT_FALSE(back.infer.postprocess);
}

TEST(Config, DefaultsAndSections) {
  const auto c = parse_config("[train]\nlr = 0.01\n");
  EXPECT_EQ(c.lr, 0.01);
  EXPECT_EQ(c.weight_decay, 0.005);
  EXPECT_EQ(c.loss.ptc_weight, 0.2);
  EXPECT_EQ(c.early_stop_patience, 10u);
  EXPECT_EQ(parse_config("[augment]\nenabled = false\n").augment.hflip, 0.0);
  EXPECT_EQ(parse_config("[augment]\nhflip = 0.1\nenabled = false\n").augment.hflip, 0.1);
}

TEST(Config, Rejections) {
  EXPECT_THROW(parse_config("[train]\nlearning_rate = 1\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("[train]\nlr = fast\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("[train]\nbatch_size = 0\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("[ptc]\nembed_dim = 1024\n"), ShapeError);
  EXPECT_THROW(parse_config("[loss]\nalpha = 1.5\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("[tokens]\nsource = cloud\n"), std::invalid_argument);
  EXPECT_THROW(load_config("/nonexistent/x.ini"), IoError);
}

TEST(Pipeline, CheckpointRoundTripIsBitwise) {
  const auto dir = fresh_dir("pipeline_ckpt");
  auto cfg = tiny_config();
  cfg.seed = 9;
  const Pipeline p(cfg);
  const auto samples = data::generate_synthetic({1, 224, 3});
  const tokens::StubTokenSource src(0);
  const auto grid = token_grid(src, samples[0].image, samples[0].id);
  const auto before = predict(p, grid, samples[0].image, cfg.infer);
  p.save(dir / "m.ckpt");
  EXPECT_TRUE(fs::exists(dir / "m.ckpt.cfg"));
  const auto q = Pipeline::load(dir / "m.ckpt");
  const auto after = predict(q, grid, samples[0].image, cfg.infer);
  EXPECT_TRUE(bitwise_equal(before.probabilities, after.probabilities));
  EXPECT_EQ(before.mask, after.mask);
  EXPECT_EQ(format_config(q.config()), format_config(cfg));
  fs::remove(dir / "m.ckpt.cfg");
  EXPECT_THROW(Pipeline::load(dir / "m.ckpt"), IoError);
}

TEST(Pipeline, PredictionShapesAndRange) {
  const Pipeline p(tiny_config());
  const auto s = data::generate_synthetic({1, 224, 1})[0];
  const auto pred = predict(p, token_grid(tokens::StubTokenSource(1), s.image, s.id), s.image, {});
  EXPECT_EQ(pred.ptc.shape(), (diff::Shape{5, 224, 224}));
  EXPECT_EQ(pred.probabilities.shape(), (diff::Shape{5, 224, 224}));
  EXPECT_EQ(pred.mask.height, 224u);
  for (auto l : pred.mask.labels) EXPECT_LE(l, 5);
  EXPECT_EQ(post::postprocess(pred.mask), pred.mask);
}

TEST(Trainer, RunLogRowsSatisfyStageWeighting) {
  const auto data_dir = fixtures::synthetic_dataset("train_runlog");
  const auto out = fresh_dir("train_runlog_out");
  auto cfg = tiny_config();
  cfg.max_epochs = 3;
  const auto r = train::train(data_dir, cfg, out);
  ASSERT_EQ(r.log.steps.size(), 6u);  // 4 images, batch 2, 3 epochs
  ASSERT_EQ(r.log.validation.size(), 3u);
  for (std::size_t i = 0; i < r.log.steps.size(); ++i) {
    const auto& s = r.log.steps[i];
    EXPECT_EQ(s.step, i);
    EXPECT_EQ(s.epoch, i / 2);
    EXPECT_NEAR(s.l_final, 0.2f * s.l_ptc + s.l_output, 1e-6);
  }
  EXPECT_EQ(slurp(out / "runlog.csv"), r.log.steps_csv());
  EXPECT_EQ(r.log.steps_csv().substr(0, 34), "epoch,step,l_final,l_ptc,l_output\n");
  EXPECT_TRUE(fs::exists(out / "best.ckpt"));
  EXPECT_TRUE(fs::exists(out / "best.ckpt.cfg"));
  EXPECT_TRUE(fs::exists(out / "last.ckpt"));
  EXPECT_EQ(r.epochs_run, 3u);
}

TEST(Trainer, HoldoutSplitsTheDataset) {
  const auto data_dir = fixtures::synthetic_dataset("train_holdout", 5);
  auto cfg = tiny_config();
  cfg.max_epochs = 1;
  cfg.val_fraction = 0.4;
  const auto r = train::train(data_dir, cfg, fresh_dir("train_holdout_out"));
  EXPECT_EQ(r.log.steps.size(), 2u);  // 3 training images in batches of 2
}

TEST(Trainer, SameSeedGivesBitwiseIdenticalLosses) {
  const auto data_dir = fixtures::synthetic_dataset("train_determinism");
  auto cfg = tiny_config();  // default augmentation on
  const auto a = train::train(data_dir, cfg, fresh_dir("train_det_a"));
  const auto b = train::train(data_dir, cfg, fresh_dir("train_det_b"));
  EXPECT_EQ(a.log.steps_csv(), b.log.steps_csv());
  EXPECT_EQ(a.log.validation_csv(), b.log.validation_csv());
  cfg.seed = 1;
  const auto c = train::train(data_dir, cfg, fresh_dir("train_det_c"));
  EXPECT_NE(a.log.steps_csv(), c.log.steps_csv());
}

TEST(Trainer, FrozenLearningRateStopsAfterTwoEpochs) {
  const auto data_dir = fixtures::synthetic_dataset("train_frozen");
  auto cfg = tiny_config();
  cfg.lr = 0;
  cfg.early_stop_patience = 1;
  cfg.max_epochs = 10;
  const auto r = train::train(data_dir, cfg, fresh_dir("train_frozen_out"));
  EXPECT_EQ(r.epochs_run, 2u);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_EQ(r.best_epoch, 0u);
  EXPECT_EQ(r.log.validation[0].l_final, r.log.validation[1].l_final);
}

TEST(Trainer, MissingTokensAbortBeforeTraining) {
  const auto data_dir = fixtures::synthetic_dataset("train_missing_tokens", 3);
  const auto samples = load_resized(data_dir, 224);
  std::vector<tokens::TokenSequence> seqs;
  const tokens::StubTokenSource stub(0);
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) seqs.push_back(stub.extract(samples[i].image, samples[i].id));
  tokens::write_tokens(seqs, data_dir / "tokens.ptok");

  auto cfg = tiny_config();
  cfg.token_source = tokens::TokenSourceSpec::file(data_dir / "tokens.ptok");
  const auto out = fresh_dir("train_missing_tokens_out");
  EXPECT_THROW(train::train(data_dir, cfg, out), LookupError);
  EXPECT_FALSE(fs::exists(out / "runlog.csv"));

  // With every id present the file source trains normally.
  seqs.push_back(stub.extract(samples.back().image, samples.back().id));
  tokens::write_tokens(seqs, data_dir / "tokens.ptok");
  cfg.max_epochs = 1;
  EXPECT_EQ(train::train(data_dir, cfg, out).epochs_run, 1u);
}

TEST(Trainer, NonFiniteLossAbortsKeepingLastGoodWeights) {
  const auto data_dir = fixtures::synthetic_dataset("train_nonfinite", 2);
  auto cfg = tiny_config();
  cfg.lr = 1e38;
  cfg.max_epochs = 5;
  cfg.batch_size = 1;
  const auto out = fresh_dir("train_nonfinite_out");
  EXPECT_THROW(train::train(data_dir, cfg, out), NumericError);
  const auto last = Pipeline::load(out / "last.ckpt");
  for (const auto& [name, t] : last.named_parameters())
    for (float v : t.data()) ASSERT_TRUE(std::isfinite(v)) << name;
  EXPECT_TRUE(fs::exists(out / "runlog.csv"));
}

TEST(Trainer, TokenSourceStaysFrozen) {
  const auto data_dir = fixtures::synthetic_dataset("train_frozen_tokens", 2);
  const auto s = load_resized(data_dir, 224)[0];
  const tokens::StubTokenSource stub(0);
  const auto before = stub.extract(s.image, s.id).values;
  auto cfg = tiny_config();
  cfg.max_epochs = 1;
  train::train(data_dir, cfg, fresh_dir("train_frozen_tokens_out"));
  EXPECT_EQ(stub.extract(s.image, s.id).values, before);
}

TEST(Infer, WritesMasksOverlaysAndHeatmaps) {
  const auto data_dir = fixtures::synthetic_dataset("infer_data", 2);
  const auto out = fresh_dir("infer_out");
  Pipeline(tiny_config()).save(out / "model.ckpt");
  {
    std::ofstream junk(data_dir / "images" / "broken.png");
    junk << "not a png";
  }
  InferRequest req{out / "model.ckpt", data_dir / "images", out / "pred", std::nullopt, std::nullopt, true, true};
  const auto s = run_inference(req);
  EXPECT_EQ(s.written, (std::vector<std::string>{"synth_000", "synth_001"}));
  ASSERT_EQ(s.skipped.size(), 1u);
  EXPECT_EQ(s.skipped[0].first, "broken");
  const auto m = data::read_png_mask(out / "pred" / "masks" / "synth_000.png");
  EXPECT_EQ(m.height, 224u);
  EXPECT_EQ(m.width, 224u);
  EXPECT_EQ(post::postprocess(m), m);
  EXPECT_TRUE(fs::exists(out / "pred" / "overlays" / "synth_000.png"));
  EXPECT_TRUE(fs::exists(out / "pred" / "heatmaps" / "synth_001_ptc_epidermis.png"));
  EXPECT_TRUE(fs::exists(out / "pred" / "heatmaps" / "synth_001_prob_tumour.png"));
}

TEST(Infer, NoPostprocessYieldsRawArgmax) {
  const auto data_dir = fixtures::synthetic_dataset("infer_raw", 1);
  const auto out = fresh_dir("infer_raw_out");
  auto cfg = tiny_config();
  cfg.infer.background_threshold = 0;  // untrained outputs sit near 0.5
  const Pipeline p(cfg);
  p.save(out / "model.ckpt");
  InferRequest req{out / "model.ckpt", data_dir / "images", out / "raw", std::nullopt, false, false, false};
  run_inference(req);
  req.out = out / "post";
  req.postprocess = std::nullopt;
  run_inference(req);
  const auto raw = data::read_png_mask(out / "raw" / "masks" / "synth_000.png");
  const auto processed = data::read_png_mask(out / "post" / "masks" / "synth_000.png");

  const auto s = load_resized(data_dir, 224)[0];
  const auto pred = predict(p, token_grid(tokens::StubTokenSource(0), s.image, s.id), s.image, cfg.infer);
  EXPECT_EQ(raw, pred.raw);
  EXPECT_EQ(processed, post::postprocess(raw));
  EXPECT_NE(raw, processed);  // an untrained net leaves speckle for the opening to remove
}

TEST(Infer, OverlayBlendsThePalette) {
  data::RgbImage img{1, 3, {100, 100, 100, 100, 100, 100, 100, 100, 100}};
  data::TissueMask m{1, 3, {0, 1, 5}};
  const auto o = overlay(img, m);
  EXPECT_EQ(std::vector<std::uint8_t>(o.pixels.begin(), o.pixels.begin() + 3), (std::vector<std::uint8_t>{100, 100, 100}));
  EXPECT_EQ(o.pixels[3], 178);  // 0.498·100 + 0.502·255
  EXPECT_EQ(o.pixels[4], 50);
  EXPECT_EQ(o.pixels[8], 50);
}

TEST(Evaluate, IdenticalDisjointAndToyCounts) {
  const auto a = fresh_dir("eval_a"), b = fresh_dir("eval_b"), c = fresh_dir("eval_c");
  data::write_png_mask(a / "x.png", data::TissueMask::filled(4, 4, 1));
  data::write_png_mask(a / "y.png", data::TissueMask{2, 2, {0, 2, 2, 3}});
  data::write_png_mask(b / "x.png", data::TissueMask::filled(4, 4, 1));
  data::write_png_mask(b / "y.png", data::TissueMask{2, 2, {0, 2, 2, 3}});
  auto r = evaluate_dirs(a, b).report;
  for (double d : r.per_class) EXPECT_EQ(d, 1.0);

  data::write_png_mask(c / "x.png", data::TissueMask::filled(4, 4, 4));
  data::write_png_mask(c / "y.png", data::TissueMask{2, 2, {2, 2, 5, 3}});
  r = evaluate_dirs(a, c).report;
  // Hand counts: tumour 16 pred / 0 truth; stroma 2 pred, 2 truth, 1 shared; necrosis 1/1/1;
  // vessels 0 pred / 16 truth; epidermis 0 / 1.
  EXPECT_NEAR(r.per_class[0], 0.0, 1e-12);
  EXPECT_NEAR(r.per_class[1], 2.0 * 1 / 4, 1e-12);
  EXPECT_NEAR(r.per_class[2], 1.0, 1e-12);
  EXPECT_NEAR(r.per_class[3], 0.0, 1e-12);
  EXPECT_NEAR(r.per_class[4], 0.0, 1e-12);
  EXPECT_NEAR(r.micro_average, 1.5 / 5, 1e-12);
}

TEST(Evaluate, ResizesGroundTruthToPredictions) {
  const auto p = fresh_dir("eval_rs_p"), g = fresh_dir("eval_rs_g");
  data::write_png_mask(p / "x.png", data::TissueMask::filled(4, 4, 2));
  data::write_png_mask(g / "x.png", data::TissueMask::filled(8, 8, 2));
  EXPECT_EQ(evaluate_dirs(p, g).report.per_class[1], 1.0);
}

TEST(Evaluate, IdMismatchListsSymmetricDifference) {
  const auto a = fresh_dir("eval_mm_a"), b = fresh_dir("eval_mm_b");
  data::write_png_mask(a / "shared.png", data::TissueMask::filled(2, 2));
  data::write_png_mask(b / "shared.png", data::TissueMask::filled(2, 2));
  data::write_png_mask(a / "only_pred.png", data::TissueMask::filled(2, 2));
  data::write_png_mask(b / "only_gt.png", data::TissueMask::filled(2, 2));
  try {
    evaluate_dirs(a, b);
    FAIL() << "expected LookupError";
  } catch (const LookupError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("only_pred"), std::string::npos);
    EXPECT_NE(msg.find("only_gt"), std::string::npos);
    EXPECT_EQ(msg.find("shared"), std::string::npos);
  }
}

TEST(Bench, ReportsExactlyTheRequestedRuns) {
  const Pipeline p(tiny_config());
  const auto r = bench(p, 224, 7, 2);
  EXPECT_EQ(r.samples.size(), 7u);
  EXPECT_EQ(r.warmup, 2u);
  EXPECT_GT(r.mean, 0.0);
  EXPECT_GE(r.stddev, 0.0);
  EXPECT_NE(r.summary().find("runs=7"), std::string::npos);
  EXPECT_EQ(bench(p, 448, 1, 0).samples.size(), 1u);
  EXPECT_THROW(bench(p, 200, 1), ShapeError);
  EXPECT_THROW(bench(p, 224, 0), std::invalid_argument);
}

TEST(Crossval, TwoFoldsOnFourImages) {
  const auto data_dir = fixtures::synthetic_dataset("cv_data");
  auto cfg = tiny_config();
  cfg.max_epochs = 1;
  const auto out = fresh_dir("cv_out");
  const auto s = crossval(data_dir, cfg, 2, out);
  ASSERT_EQ(s.folds.size(), 2u);
  EXPECT_FALSE(s.partial);
  EXPECT_EQ(s.completed, 2u);
  for (std::size_t c = 0; c < 5; ++c) {
    const double mean = (s.folds[0].report.per_class[c] + s.folds[1].report.per_class[c]) / 2;
    EXPECT_NEAR(s.mean[c], mean, 1e-12);
    EXPECT_NEAR(s.stddev[c], std::abs(s.folds[0].report.per_class[c] - mean), 1e-12);
  }
  EXPECT_TRUE(fs::exists(out / "fold_0" / "report.csv"));
  EXPECT_TRUE(fs::exists(out / "fold_1" / "report.csv"));
  const auto first_summary = slurp(out / "summary.csv");
  EXPECT_EQ(first_summary.substr(0, 24), "# folds completed: 2/2\nc");

  const auto out2 = fresh_dir("cv_out2");
  const auto again = crossval(data_dir, cfg, 2, out2);
  EXPECT_EQ(again.folds[0].fold, s.folds[0].fold);
  EXPECT_EQ(slurp(out2 / "summary.csv"), first_summary);
  EXPECT_EQ(slurp(out2 / "folds.csv"), slurp(out / "folds.csv"));
}

TEST(Crossval, FailingFoldsMarkTheSummaryPartial) {
  CrossvalSummary s;
  s.folds.resize(3);
  s.folds[0].ok = true;
  s.folds[0].report.per_class = {1, 1, 1, 1, 1};
  s.folds[0].report.micro_average = 1;
  s.folds[2].ok = true;
  s.folds[2].report.per_class = {0, 0.5, 1, 1, 1};
  s.folds[2].report.micro_average = 0.7;
  summarize(s);
  EXPECT_TRUE(s.partial);
  EXPECT_EQ(s.completed, 2u);
  EXPECT_NEAR(s.mean[0], 0.5, 1e-12);
  EXPECT_NEAR(s.stddev[0], 0.5, 1e-12);
  EXPECT_NEAR(s.micro_mean, 0.85, 1e-12);
  EXPECT_NE(s.csv().find("2/3 (partial)"), std::string::npos);

  // A dataset too small for k folds fails up front.
  const auto data_dir = fixtures::synthetic_dataset("cv_small", 2);
  EXPECT_THROW(crossval(data_dir, tiny_config(), 3, fresh_dir("cv_small_out")), std::invalid_argument);
}
