#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "pseg/diff/grad_check.hpp"
#include "pseg/diff/ops.hpp"
#include "pseg/error.hpp"
#include "pseg/losses/losses.hpp"
#include "pseg/post/postprocess.hpp"
#include "pseg/ptc/ptc.hpp"
#include "pseg/segnet/segnet.hpp"

using namespace pseg;
using diff::Shape;
using diff::Tensor;
using losses::LossConfig;

namespace {

// Focal term for one pixel as written on paper, evaluated directly.
double focal_scalar(double p, int g, double alpha = 0.3, double gamma = 3.5) {
  return g == 1 ? -alpha * std::pow(1 - p, gamma) * std::log(p) : -(1 - alpha) * std::pow(p, gamma) * std::log(1 - p);
}

// Per-channel Dice loss computed by flat loops.
double dice_scalar(const std::vector<double>& p, const std::vector<double>& g, std::size_t channels, double eps) {
  const std::size_t plane = p.size() / channels;
  double total = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    double inter = 0, ps = 0, gs = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      inter += p[c * plane + i] * g[c * plane + i];
      ps += p[c * plane + i];
      gs += g[c * plane + i];
    }
    total += 1 - 2 * inter / (ps + gs + eps);
  }
  return total / static_cast<double>(channels);
}

data::TissueMask random_mask(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  auto m = data::TissueMask::filled(h, w);
  for (auto& v : m.labels) v = static_cast<std::uint8_t>(rng.below(6));
  return m;
}

Tensor<double> one_channel(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor<double>::from({1, 1, n}, std::move(v));
}

}  // namespace

TEST(LossConfig, Defaults) {
  const LossConfig c;
  EXPECT_EQ(c.alpha, 0.3);
  EXPECT_EQ(c.gamma, 3.5);
  EXPECT_EQ(c.epsilon, 1e-6);
  EXPECT_EQ(c.dice_weight, 2.0);
  EXPECT_EQ(c.ptc_weight, 0.2);
}

TEST(LossConfig, Validation) {
  LossConfig c;
  c.alpha = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = LossConfig{};
  c.gamma = -0.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = LossConfig{};
  c.epsilon = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = LossConfig{};
  c.ptc_weight = 0;
  EXPECT_NO_THROW(c.validate());
}

TEST(OneHot, RoundTripsThroughArgmax) {
  auto m = random_mask(9, 7, 3);
  auto g = losses::OneHotTarget<float>::from_mask(m).values;
  ASSERT_EQ(g.shape(), (Shape{5, 9, 7}));
  const std::size_t plane = 63;
  for (std::size_t i = 0; i < plane; ++i) {
    float s = 0;
    for (std::size_t c = 0; c < 5; ++c) s += g[c * plane + i];
    EXPECT_EQ(s, m.labels[i] == 0 ? 0.0f : 1.0f);
  }
  auto back = post::argmax_map(g);
  for (std::size_t i = 0; i < plane; ++i)
    if (m.labels[i] != 0) EXPECT_EQ(back.labels[i], m.labels[i]);
  auto batch = losses::OneHotTarget<float>::from_masks({m, m});
  EXPECT_EQ(batch.values.shape(), (Shape{2, 5, 9, 7}));
}

TEST(DiceLoss, PerfectOverlapIsEpsilonSmall) {
  std::vector<double> v(100);
  for (std::size_t i = 0; i < 100; ++i) v[i] = i % 3 == 0 ? 1.0 : 0.0;
  const double l = losses::dice_loss(one_channel(v), one_channel(v), 1e-6).item();
  EXPECT_GE(l, 0.0);
  EXPECT_LE(l, 1e-7);
}

TEST(DiceLoss, WorstCaseIsOne) {
  const double l = losses::dice_loss(one_channel(std::vector<double>(100, 1.0)), one_channel(std::vector<double>(100, 0.0)), 1e-6).item();
  EXPECT_NEAR(l, 1.0, 1e-12);
}

TEST(DiceLoss, HalfProbabilityHalfPositive) {
  std::vector<double> g(100, 0.0);
  std::fill(g.begin(), g.begin() + 50, 1.0);
  const double l = losses::dice_loss(one_channel(std::vector<double>(100, 0.5)), one_channel(g), 1e-6).item();
  EXPECT_NEAR(l, 1 - 2 * 25 / (50 + 50 + 1e-6), 1e-15);
  EXPECT_NEAR(l, 0.5, 1e-8);
}

TEST(DiceLoss, MatchesFlatLoopsAndAveragesBatch) {
  auto p = oracle::random_tensor<double>({5, 6, 6}, 1, 0, 1);
  auto g = losses::OneHotTarget<double>::from_mask(random_mask(6, 6, 2)).values;
  const double expect = dice_scalar({p.data().begin(), p.data().end()}, {g.data().begin(), g.data().end()}, 5, 1e-6);
  EXPECT_NEAR(losses::dice_loss(p, g, 1e-6).item(), expect, 1e-14);

  auto p2 = oracle::random_tensor<double>({5, 6, 6}, 3, 0, 1);
  auto g2 = losses::OneHotTarget<double>::from_mask(random_mask(6, 6, 4)).values;
  const double a = losses::dice_loss(p, g, 1e-6).item(), b = losses::dice_loss(p2, g2, 1e-6).item();
  const double batched = losses::dice_loss(diff::stack<double>({p, p2}), diff::stack<double>({g, g2}), 1e-6).item();
  EXPECT_NEAR(batched, 0.5 * (a + b), 1e-14);
}

TEST(DiceLoss, ShapeMismatchRejected) {
  EXPECT_THROW(losses::dice_loss(Tensor<double>::zeros({5, 4, 4}), Tensor<double>::zeros({5, 4, 3}), 1e-6),
               ShapeError);
}

TEST(FocalLoss, SinglePixelValues) {
  const double pos = losses::focal_loss(one_channel({0.5}), one_channel({1.0}), 0.3, 3.5).item();
  const double neg = losses::focal_loss(one_channel({0.5}), one_channel({0.0}), 0.3, 3.5).item();
  EXPECT_NEAR(pos, focal_scalar(0.5, 1), 1e-15);
  EXPECT_NEAR(neg, focal_scalar(0.5, 0), 1e-15);
  EXPECT_NEAR(pos, 0.01838, 1e-5);
  EXPECT_NEAR(neg, 0.04288, 1e-5);
}

TEST(FocalLoss, ConfidentCorrectIsNearZero) {
  const double l = losses::focal_loss(one_channel(std::vector<double>(10, 1 - 1e-7)), one_channel(std::vector<double>(10, 1.0)), 0.3, 3.5).item();
  EXPECT_LT(l, 1e-20);
}

TEST(FocalLoss, MeanAndSumReductions) {
  auto p = oracle::random_tensor<double>({5, 4, 4}, 5, 0.01, 0.99);
  auto g = losses::OneHotTarget<double>::from_mask(random_mask(4, 4, 6)).values;
  double expect = 0;
  for (std::size_t i = 0; i < p.numel(); ++i) expect += focal_scalar(p[i], g[i] > 0.5 ? 1 : 0);
  EXPECT_NEAR(losses::focal_loss(p, g, 0.3, 3.5, losses::FocalReduction::Sum).item(), expect, 1e-13);
  EXPECT_NEAR(losses::focal_loss(p, g, 0.3, 3.5).item(), expect / 80, 1e-15);
}

TEST(FocalLoss, ClampedProbabilitiesStayFinite) {
  auto l = losses::focal_loss(one_channel({0.0, 1.0}), one_channel({1.0, 0.0}), 0.3, 3.5);
  EXPECT_TRUE(std::isfinite(l.item()));
}

TEST(DiceFl, Composition) {
  EXPECT_NEAR(LossConfig{}.dice_weight * 0.4 + 0.1, 0.9, 1e-15);
  auto p = oracle::random_tensor<double>({5, 8, 8}, 7, 0.01, 0.99);
  auto g = losses::OneHotTarget<double>::from_mask(random_mask(8, 8, 8)).values;
  const LossConfig c;
  const double composed = losses::dice_fl(p, g, c).item();
  const double parts = 2 * losses::dice_loss(p, g, c.epsilon).item() + losses::focal_loss(p, g, c.alpha, c.gamma).item();
  EXPECT_NEAR(composed, parts, 1e-12);
  EXPECT_LT(losses::dice_fl(g, g, c).item(), 1e-6);  // perfect prediction (g clamps inside focal)
}

TEST(DualStage, Weighting) {
  auto lp = Tensor<double>::from({1}, {1.0}), lo = Tensor<double>::from({1}, {0.5});
  EXPECT_EQ(losses::combine_stages(lp, lo, 0.2).item(), 0.2 * 1.0 + 0.5);
  EXPECT_NEAR(losses::combine_stages(lp, lo, 0.2).item(), 0.7, 1e-15);

  auto p1 = oracle::random_tensor<double>({5, 8, 8}, 1, 0.01, 0.99);
  auto p2 = oracle::random_tensor<double>({5, 8, 8}, 2, 0.01, 0.99);
  auto g = losses::OneHotTarget<double>::from_mask(random_mask(8, 8, 3)).values;
  LossConfig c;
  c.ptc_weight = 0;
  auto d = losses::dual_stage_loss(p1, p2, g, c);
  EXPECT_EQ(d.total.item(), d.output.item());
}

TEST(LossGradients, DiceFocalAndDualStage) {
  auto g = losses::OneHotTarget<double>::from_mask(random_mask(6, 6, 11)).values;
  auto p = oracle::random_tensor<double>({5, 6, 6}, 12, 0.05, 0.95);
  auto q = oracle::random_tensor<double>({5, 6, 6}, 13, 0.05, 0.95);
  const LossConfig c;
  diff::GradCheckOptions opt;
  opt.step = 1e-6;
  auto check = [&](auto fn, const Tensor<double>& at) {
    const auto r = diff::grad_check(fn, at, opt);
    EXPECT_TRUE(r.passed) << r.message;
  };
  check([&](const Tensor<double>& t) { return losses::dice_loss(t, g, c.epsilon); }, p);
  check([&](const Tensor<double>& t) { return losses::dice_loss(t, g, c.epsilon, losses::DiceReduction::Global); }, p);
  check([&](const Tensor<double>& t) { return losses::focal_loss(t, g, c.alpha, c.gamma); }, p);
  check([&](const Tensor<double>& t) { return losses::dual_stage_loss(t, q, g, c).total; }, p);
  check([&](const Tensor<double>& t) { return losses::dual_stage_loss(q, t, g, c).total; }, p);
}

TEST(LossGradients, PtcWeightGradientDecomposes) {
  // d L_final / d θ_ptc = w · d L_ptc / d θ + d L_output / d θ, where the second
  // term flows through the fused input of the segmentation network.
  ptc::PtcConfig pc;
  pc.embed_dim = 6;
  pc.hidden1 = 4;
  pc.hidden2 = 3;
  pc.grid_side = 2;
  pc.output_side = 28;
  segnet::SegNetConfig sc;
  sc.encoder_widths = {4};
  sc.decoder_widths = {4};
  sc.scse_reduction = 2;
  sc.input_size = 28;
  ptc::Ptc<double> head(pc, 1);
  segnet::SegNet<double> net(sc, 2);
  auto grid = oracle::random_tensor<double>({6, 2, 2}, 3);
  auto image = oracle::random_tensor<double>({3, 28, 28}, 4, 0, 1);
  auto g = losses::OneHotTarget<double>::from_mask(random_mask(28, 28, 5)).values;
  const LossConfig c;
  auto weight = head.named_parameters()[0].second;
  weight.set_requires_grad(true);

  auto grad_of = [&](int which) {
    weight.zero_grad();
    auto p = head.forward(grid);
    auto d = losses::dual_stage_loss(p, net.forward(ptc::fuse(p, image)), g, c);
    (which == 0 ? d.total : which == 1 ? d.ptc : d.output).backward();
    return std::vector<double>(weight.grad().begin(), weight.grad().end());
  };
  const auto total = grad_of(0), via_ptc = grad_of(1), via_output = grad_of(2);
  double norm = 0;
  for (std::size_t i = 0; i < total.size(); ++i) {
    EXPECT_NEAR(total[i], c.ptc_weight * via_ptc[i] + via_output[i], 1e-12);
    norm += std::abs(total[i]);
  }
  EXPECT_GT(norm, 0.0);
  diff::GradCheckOptions opt;
  opt.max_coordinates = 12;
  const auto r = diff::grad_check_wrt(
      [&] {
        auto p = head.forward(grid);
        return losses::dual_stage_loss(p, net.forward(ptc::fuse(p, image)), g, c).total;
      },
      weight, opt);
  EXPECT_TRUE(r.passed) << r.message;
}
