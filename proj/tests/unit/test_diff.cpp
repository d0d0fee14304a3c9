#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "oracles.hpp"
#include "pseg/diff/adamw.hpp"
#include "pseg/diff/checkpoint.hpp"
#include "pseg/diff/grad_check.hpp"
#include "pseg/diff/layers.hpp"
#include "pseg/diff/ops.hpp"
#include "pseg/error.hpp"

using namespace pseg;
using namespace pseg::diff;

namespace {

std::vector<double> values(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("pseg_test_" + name);
}

}  // namespace

TEST(Tensor, FromRejectsLengthMismatch) {
  EXPECT_THROW(Tensor<float>::from({2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_NO_THROW(Tensor<float>::from({2, 3}, std::vector<float>(6)));
}

TEST(Tensor, BackwardPopulatesEveryReachableLeaf) {
  auto a = oracle::random_tensor<double>({2, 3}, 1, -1, 1, true);
  auto b = oracle::random_tensor<double>({2, 3}, 2, -1, 1, true);
  auto c = oracle::random_tensor<double>({2, 3}, 3);  // constant
  auto loss = sum(add(sigmoid(a), add(b, c)));
  loss.backward();
  ASSERT_TRUE(a.has_grad());
  ASSERT_TRUE(b.has_grad());
  EXPECT_FALSE(c.has_grad());
  EXPECT_EQ(a.grad().size(), a.numel());
  for (double g : b.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Tensor, NoGradGuardSkipsRecording) {
  auto a = oracle::random_tensor<double>({4}, 1, -1, 1, true);
  Tensor<double> out;
  {
    NoGradGuard guard;
    out = sigmoid(a);
  }
  EXPECT_FALSE(out.requires_grad());
  EXPECT_TRUE(grad_enabled());
}

TEST(Tensor, SharedSubgraphAccumulates) {
  auto a = Tensor<double>::from({1}, {2.0}, true);
  auto s = add(a, a);
  sum(add(s, s)).backward();
  EXPECT_DOUBLE_EQ(a.grad()[0], 4.0);
}

TEST(Conv2d, IdentityKernel) {
  auto x = Tensor<float>::from({1, 1, 2, 2}, {1, 2, 3, 4});
  auto w = Tensor<float>::from({1, 1, 1, 1}, {1});
  auto y = conv2d(x, ConvSpec::conv(1, 1, 1), w);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()), (std::vector<float>{1, 2, 3, 4}));
}

TEST(Conv2d, OnesKernelCountsNeighbours) {
  auto x = Tensor<float>::full({1, 1, 4, 4}, 1.0f);
  auto w = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
  auto y = conv2d(x, ConvSpec::conv(1, 1, 3, 1, 1), w);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_EQ(y[0], 4.0f);       // corner
  EXPECT_EQ(y[1], 6.0f);       // edge
  EXPECT_EQ(y[5], 9.0f);       // interior
  EXPECT_EQ(y[15], 4.0f);
}

TEST(Conv2d, AcceptsUnbatchedInput) {
  auto x = oracle::random_tensor<float>({2, 5, 5}, 7);
  ConvLayer<float> layer(ConvSpec::conv(2, 3, 3, 1, 1), 1);
  EXPECT_EQ(layer(x).shape(), (Shape{3, 5, 5}));
}

TEST(Conv2d, MatchesDirectSummation) {
  struct Case {
    ConvSpec spec;
    std::size_t n, h, w;
  };
  const std::vector<Case> cases{{ConvSpec::conv(3, 4, 3, 1, 1), 2, 7, 6},
                                {ConvSpec::conv(2, 5, 3, 2, 1), 1, 9, 9},
                                {ConvSpec::conv(4, 2, 1), 3, 4, 5},
                                {ConvSpec::conv(1, 3, 5, 3, 2), 2, 11, 8},
                                {{2, 3, {3, 1}, {1, 2}, {1, 0}, false}, 1, 6, 7}};
  std::uint64_t seed = 10;
  for (const auto& c : cases) {
    auto x = oracle::random_tensor<double>({c.n, c.spec.in_channels, c.h, c.w}, ++seed);
    auto w = oracle::random_tensor<double>(c.spec.weight_shape(), ++seed);
    auto b = oracle::random_tensor<double>({c.spec.out_channels}, ++seed);
    auto y = conv2d(x, c.spec, w, b);
    std::size_t oh = 0, ow = 0;
    const auto bias = values(b);
    const auto expect = oracle::conv2d(values(x), c.n, c.spec.in_channels, c.h, c.w, c.spec, values(w), &bias, oh, ow);
    ASSERT_EQ(y.shape(), (Shape{c.n, c.spec.out_channels, oh, ow}));
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(y[i], expect[i], 1e-12);
  }
}

TEST(Conv2d, ChannelMismatchNamesTheDimension) {
  auto x = Tensor<float>::zeros({1, 3, 4, 4});
  auto w = Tensor<float>::zeros({1, 2, 3, 3});
  try {
    conv2d(x, ConvSpec::conv(2, 1, 3), w);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("dim 1"), std::string::npos) << e.what();
  }
}

TEST(Conv2d, KernelLargerThanInputIsRejected) {
  auto x = Tensor<float>::zeros({1, 1, 2, 2});
  auto w = Tensor<float>::zeros({1, 1, 3, 3});
  EXPECT_THROW(conv2d(x, ConvSpec::conv(1, 1, 3), w), ShapeError);
}

TEST(Conv2d, InputGradientMatchesFiniteDifferences) {
  const auto spec = ConvSpec::conv(3, 4, 3, 1, 1);
  auto w = oracle::random_tensor<double>(spec.weight_shape(), 5);
  auto b = oracle::random_tensor<double>({4}, 6);
  auto x = oracle::random_tensor<double>({2, 3, 5, 5}, 7, -1, 1, true);
  sum(conv2d(x, spec, w, b)).backward();
  const auto numeric = oracle::numeric_gradient(
      [&](const std::vector<double>& v) {
        auto t = Tensor<double>::from(x.shape(), v);
        return sum(conv2d(t, spec, w, b)).item();
      },
      values(x));
  for (std::size_t i = 0; i < numeric.size(); ++i) EXPECT_LT(oracle::relative_error(x.grad()[i], numeric[i]), 1e-4);
}

TEST(ConvTranspose2d, SinglePixelBroadcast) {
  auto x = Tensor<float>::from({1, 1, 1, 1}, {5});
  auto w = Tensor<float>::full({1, 1, 2, 2}, 1.0f);
  auto y = conv_transpose2d(x, ConvSpec::deconv(1, 1, 2, 2), w);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (float v : y.data()) EXPECT_EQ(v, 5.0f);
}

TEST(ConvTranspose2d, SizeArithmetic) {
  EXPECT_EQ(ConvSpec::deconv(1, 1, 4, 2, 1).output_size({16, 16}), (Hw{32, 32}));
  EXPECT_EQ(ConvSpec::deconv(1, 1, 7, 7, 0).output_size({32, 32}), (Hw{224, 224}));
  EXPECT_EQ(ConvSpec::conv(1, 1, 3, 2, 1).output_size({224, 224}), (Hw{112, 112}));
}

TEST(ConvTranspose2d, MatchesScatterOracle) {
  struct Case {
    ConvSpec spec;
    std::size_t n, h, w;
  };
  const std::vector<Case> cases{{ConvSpec::deconv(3, 2, 4, 2, 1), 2, 4, 5},
                                {ConvSpec::deconv(2, 3, 7, 7, 0), 1, 2, 2},
                                {ConvSpec::deconv(4, 1, 3, 1, 1), 1, 5, 3},
                                {{2, 2, {2, 3}, {2, 1}, {0, 1}, true}, 2, 3, 4}};
  std::uint64_t seed = 40;
  for (const auto& c : cases) {
    auto x = oracle::random_tensor<double>({c.n, c.spec.in_channels, c.h, c.w}, ++seed);
    auto w = oracle::random_tensor<double>(c.spec.weight_shape(), ++seed);
    auto b = oracle::random_tensor<double>({c.spec.out_channels}, ++seed);
    auto y = conv_transpose2d(x, c.spec, w, b);
    std::size_t oh = 0, ow = 0;
    const auto bias = values(b);
    const auto expect =
        oracle::conv_transpose2d(values(x), c.n, c.spec.in_channels, c.h, c.w, c.spec, values(w), &bias, oh, ow);
    ASSERT_EQ(y.shape(), (Shape{c.n, c.spec.out_channels, oh, ow}));
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(y[i], expect[i], 1e-12);
  }
}

TEST(ConvTranspose2d, IsTheAdjointOfConv2d) {
  // <conv(x), y> == <x, conv_transpose(y)> with the same weights and no bias.
  const auto fwd = ConvSpec::conv(3, 2, 4, 2, 1);
  ConvSpec back = fwd;
  back.transposed = true;
  back.in_channels = fwd.out_channels;
  back.out_channels = fwd.in_channels;
  auto x = oracle::random_tensor<double>({1, 3, 8, 8}, 1);
  auto w = oracle::random_tensor<double>(fwd.weight_shape(), 2);
  auto cx = conv2d(x, fwd, w);
  auto y = oracle::random_tensor<double>(cx.shape(), 3);
  const double lhs = dot(cx, y);
  const double rhs = dot(x, conv_transpose2d(y, back, w));
  EXPECT_LT(oracle::relative_error(lhs, rhs), 1e-12);
}

TEST(Sigmoid, ValuesAndSaturation) {
  auto y = sigmoid(Tensor<double>::from({4}, {0.0, -1000.0, 1000.0, -50.0}));
  EXPECT_EQ(y[0], 0.5);
  for (double v : y.data()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_LT(y[1], 1e-300);
}

TEST(Sigmoid, GradientIsSTimesOneMinusS) {
  auto x = oracle::random_tensor<double>({20}, 3, -4, 4, true);
  auto s = sigmoid(x);
  sum(s).backward();
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(x.grad()[i], s[i] * (1 - s[i]), 1e-15);
  const auto numeric = oracle::numeric_gradient(
      [](const std::vector<double>& v) {
        double acc = 0;
        for (double z : v) acc += 1 / (1 + std::exp(-z));
        return acc;
      },
      values(x));
  for (std::size_t i = 0; i < 20; ++i) EXPECT_LT(oracle::relative_error(x.grad()[i], numeric[i]), 1e-6);
}

TEST(Concat, ShapesAndEmptyOperand) {
  auto a = Tensor<float>::zeros({5, 224, 224});
  auto b = Tensor<float>::zeros({3, 224, 224});
  EXPECT_EQ(concat_channels(a, b).shape(), (Shape{8, 224, 224}));
  auto x = oracle::random_tensor<float>({2, 3, 3}, 9);
  auto empty = Tensor<float>::zeros({0, 3, 3});
  auto y = concat_channels(x, empty);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_TRUE(std::equal(y.data().begin(), y.data().end(), x.data().begin()));
}

TEST(Concat, BackwardOfSumIsOnesOnBothSides) {
  auto a = oracle::random_tensor<double>({2, 3, 3}, 1, -1, 1, true);
  auto b = oracle::random_tensor<double>({1, 3, 3}, 2, -1, 1, true);
  sum(concat_channels(a, b)).backward();
  for (double g : a.grad()) EXPECT_EQ(g, 1.0);
  for (double g : b.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Concat, SpatialMismatchRejected) {
  EXPECT_THROW(concat_channels(Tensor<float>::zeros({1, 3, 3}), Tensor<float>::zeros({1, 3, 4})), ShapeError);
}

TEST(Bilinear, ConstantIsPreserved) {
  auto x = Tensor<float>::full({3, 37, 37}, 7.0f);
  auto y = bilinear_resize(x, 224, 224);
  for (float v : y.data()) EXPECT_EQ(v, 7.0f);
  EXPECT_EQ(bilinear_resize(Tensor<float>::zeros({3, 1024, 1024}), 224, 224).shape(), (Shape{3, 224, 224}));
}

TEST(Bilinear, HalfPixelUpsampling) {
  auto x = Tensor<double>::from({1, 2, 2}, {0, 1, 0, 1});
  auto y = bilinear_resize(x, 4, 4);
  // src = (dst + 0.5) / 2 - 0.5, clamped: -0.25, 0.25, 0.75, 1.25
  const std::vector<double> row{0.0, 0.25, 0.75, 1.0};
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(y[r * 4 + c], row[c]);
}

TEST(Ops, GradChecks) {
  GradCheckOptions opt;
  opt.tolerance = 1e-6;
  auto x = oracle::random_tensor<double>({2, 3, 4, 4}, 11);
  auto gate_c = oracle::random_tensor<double>({2, 3, 1, 1}, 12);
  auto gate_s = oracle::random_tensor<double>({2, 1, 4, 4}, 13);
  auto weights = oracle::random_tensor<double>({2, 3, 4, 4}, 14);  // breaks symmetry of plain sums
  auto weighted = [&](const Tensor<double>& t) { return sum(mul_broadcast(t, weights)); };
  EXPECT_TRUE(grad_check([&](const Tensor<double>& t) { return weighted(silu(t)); }, x, opt).passed);
  EXPECT_TRUE(grad_check([&](const Tensor<double>& t) { return weighted(mul_broadcast(t, gate_c)); }, x, opt).passed);
  EXPECT_TRUE(grad_check([&](const Tensor<double>& t) { return weighted(mul_broadcast(t, gate_s)); }, x, opt).passed);
  EXPECT_TRUE(grad_check([&](const Tensor<double>& g) { return weighted(mul_broadcast(x, g)); }, gate_c, opt).passed);
  EXPECT_TRUE(grad_check([&](const Tensor<double>& g) { return weighted(mul_broadcast(x, g)); }, gate_s, opt).passed);
  EXPECT_TRUE(grad_check(
                  [&](const Tensor<double>& t) {
                    return sum(mul_broadcast(global_avg_pool(t), gate_c));
                  },
                  x, opt)
                  .passed);
  auto small = oracle::random_tensor<double>({1, 2, 3, 3}, 15);
  auto w6 = oracle::random_tensor<double>({1, 2, 6, 6}, 16);
  EXPECT_TRUE(grad_check([&](const Tensor<double>& t) { return sum(mul_broadcast(upsample_nearest(t, 2), w6)); },
                         small, opt)
                  .passed);
  EXPECT_TRUE(grad_check(
                  [&](const Tensor<double>& t) {
                    auto s = slice_channels(t, 1, 3);
                    return sum(mul_broadcast(s, slice_channels(weights, 0, 2)));
                  },
                  x, opt)
                  .passed);
  EXPECT_TRUE(grad_check(
                  [&](const Tensor<double>& t) {
                    auto st = stack(std::vector<Tensor<double>>{t, scale(t, 2.0)});
                    return sum(mul_broadcast(select(st, 1), weights));
                  },
                  x, opt)
                  .passed);
}

TEST(Ops, SliceOfConcatRecoversOperands) {
  auto a = oracle::random_tensor<float>({5, 6, 6}, 1);
  auto b = oracle::random_tensor<float>({3, 6, 6}, 2);
  auto back = slice_channels(concat_channels(a, b), 5, 8);
  EXPECT_TRUE(std::equal(back.data().begin(), back.data().end(), b.data().begin()));
}

TEST(Ops, PairwiseSumIsAccurate) {
  std::vector<float> v(1 << 20, 0.1f);
  auto s = sum(Tensor<float>::from({v.size()}, v));
  const double exact = static_cast<double>(0.1f) * static_cast<double>(v.size());
  EXPECT_LT(std::abs(s.item() - exact) / exact, 1e-6);
}

TEST(GradCheck, SumHasZeroError) {
  auto x = oracle::random_tensor<double>({3, 4}, 1);
  const auto r = grad_check([](const Tensor<double>& t) { return sum(t); }, x);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_relative_error, 1e-9);
  EXPECT_EQ(r.coordinates_checked, 12u);
}

TEST(GradCheck, SumOfSigmoidBelowOneInAMillion) {
  auto x = oracle::random_tensor<double>({50}, 2, -3, 3);
  const auto r = grad_check([](const Tensor<double>& t) { return sum(sigmoid(t)); }, x);
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(GradCheck, DetectsAWrongGradient) {
  // A deliberately broken op: forward is x², backward claims 3x.
  auto broken = [](const Tensor<double>& t) {
    std::vector<double> v(t.data().begin(), t.data().end());
    for (auto& z : v) z *= z;
    auto out = make_result<double>(t.shape(), v, {t.node()}, [](Node<double>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3 * self.parents[0]->data[i] * self.grad[i];
    });
    return sum(out);
  };
  auto x = oracle::random_tensor<double>({5}, 3, 0.5, 1.0);
  const auto r = grad_check(broken, x);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_relative_error, 0.1);
}

TEST(GradCheck, SampledCoordinatesAndLeafPerturbation) {
  ConvLayer<double> layer(ConvSpec::conv(2, 3, 3, 1, 1), 4);
  auto x = oracle::random_tensor<double>({1, 2, 6, 6}, 5);
  GradCheckOptions opt;
  opt.max_coordinates = 10;
  const auto before = values(layer.weight);
  const auto r = grad_check_wrt([&] { return sum(sigmoid(layer(x))); }, layer.weight, opt);
  EXPECT_TRUE(r.passed) << r.message;
  EXPECT_EQ(r.coordinates_checked, 10u);
  EXPECT_EQ(values(layer.weight), before);
}

TEST(AdamW, ZeroGradientZeroDecayLeavesParameters) {
  auto p = oracle::random_tensor<double>({4}, 1, -1, 1, true);
  const auto before = values(p);
  AdamWOptions o;
  o.weight_decay = 0.0;
  AdamW<double> opt({p}, o);
  std::fill(p.mutable_grad().begin(), p.mutable_grad().end(), 0.0);
  opt.step();
  EXPECT_EQ(values(p), before);
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  auto p = Tensor<double>::from({1}, {0.3}, true);
  AdamWOptions o;
  o.weight_decay = 0.0;
  AdamW<double> opt({p}, o);
  p.mutable_grad()[0] = 1.0;
  opt.step();
  // m̂ = 1, v̂ = 1: displacement lr / (1 + eps).
  EXPECT_NEAR(0.3 - p[0], o.lr / (1 + o.eps), 1e-15);
}

TEST(AdamW, DecoupledDecayScalesParameters) {
  auto p = Tensor<double>::from({2}, {1.0, -2.0}, true);
  AdamW<double> opt({p});
  for (int k = 1; k <= 3; ++k) {
    p.mutable_grad()[0] = 0.0;
    p.mutable_grad()[1] = 0.0;
    opt.step();
    const double factor = std::pow(1 - 1e-3 * 0.005, k);
    EXPECT_NEAR(p[0], 1.0 * factor, 1e-15);
    EXPECT_NEAR(p[1], -2.0 * factor, 1e-15);
  }
  EXPECT_EQ(opt.step_count(), 3u);
}

TEST(AdamW, NonFiniteGradientLeavesEverythingUntouched) {
  auto a = Tensor<double>::from({1}, {1.0}, true);
  auto b = Tensor<double>::from({1}, {2.0}, true);
  AdamW<double> opt({a, b});
  a.mutable_grad()[0] = 0.5;
  b.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(opt.step(), NumericError);
  EXPECT_EQ(a[0], 1.0);
  EXPECT_EQ(b[0], 2.0);
  EXPECT_EQ(opt.step_count(), 0u);
}

TEST(Checkpoint, RoundTrip) {
  ConvLayer<float> a(ConvSpec::conv(3, 4, 3, 1, 1), 1), b(ConvSpec::conv(3, 4, 3, 1, 1), 2);
  NamedParameters<float> pa, pb;
  a.append_parameters("layer", pa);
  b.append_parameters("layer", pb);
  const auto path = temp_path("ckpt.pseg");
  save_parameters(path, pa);
  load_parameters(path, pb);
  EXPECT_TRUE(std::equal(a.weight.data().begin(), a.weight.data().end(), b.weight.data().begin()));
  const auto entries = read_checkpoint(path);
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].name, "layer.weight");
  EXPECT_EQ(entries[0].shape, (Shape{4, 3, 3, 3}));
  std::filesystem::remove(path);
}

TEST(Checkpoint, MismatchesAreRejected) {
  ConvLayer<float> a(ConvSpec::conv(3, 4, 3), 1), wider(ConvSpec::conv(3, 5, 3), 1);
  NamedParameters<float> pa, pw, renamed;
  a.append_parameters("layer", pa);
  wider.append_parameters("layer", pw);
  a.append_parameters("other", renamed);
  const auto path = temp_path("mismatch.pseg");
  save_parameters(path, pa);
  EXPECT_THROW(load_parameters(path, pw), ShapeError);
  EXPECT_THROW(load_parameters(path, renamed), LookupError);
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptFilesReportTheOffset) {
  const auto path = temp_path("corrupt.pseg");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
  }
  try {
    read_checkpoint(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  write_checkpoint(path, {{"x", {2}, {1.0f, 2.0f}}});
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << 'z';
  }
  EXPECT_THROW(read_checkpoint(path), FormatError);
  std::filesystem::remove(path);
}

TEST(Rng, CounterBasedStreamsAreReproducible) {
  Rng a(derive_seed(7, "init", 1)), b(derive_seed(7, "init", 1)), c(derive_seed(7, "init", 2));
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    EXPECT_NE(va, c.next_u64());
  }
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_LT(r.below(7), 7u);
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}
