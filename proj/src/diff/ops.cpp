#include "pseg/diff/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "pseg/error.hpp"

namespace pseg::diff {

namespace {

// N×C×H×W view of a rank-3 or rank-4 tensor.
struct ImageDims {
  std::size_t n = 1, c = 1, h = 1, w = 1;
  bool batched = false;

  std::size_t plane() const { return h * w; }
  std::size_t item() const { return c * h * w; }

  Shape shape_with(std::size_t channels, std::size_t height, std::size_t width) const {
    if (batched) return {n, channels, height, width};
    return {channels, height, width};
  }
};

ImageDims image_dims(const Shape& s, const char* op) {
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  throw ShapeError(std::string(op) + ": expected C×H×W or N×C×H×W input, got " + to_string(s));
}

std::size_t channel_axis(const ImageDims& d) { return d.batched ? 1 : 0; }

// Row-major C = alpha * op(A) op(B) + beta * C with explicit leading dimensions.
template <typename T>
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const Mat, Eigen::Unaligned, Eigen::OuterStride<>>;
  using Map = Eigen::Map<Mat, Eigen::Unaligned, Eigen::OuterStride<>>;
  const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
  const ConstMap ma(a, ta ? ei(k) : ei(m), ta ? ei(m) : ei(k), Eigen::OuterStride<>(ei(lda)));
  const ConstMap mb(b, tb ? ei(n) : ei(k), tb ? ei(k) : ei(n), Eigen::OuterStride<>(ei(ldb)));
  Map mc(c, ei(m), ei(n), Eigen::OuterStride<>(ei(ldc)));
  if (beta == T{0}) {
    mc.setZero();
  } else if (beta != T{1}) {
    mc *= beta;
  }
  if (ta && tb) {
    mc.noalias() += alpha * (ma.transpose() * mb.transpose());
  } else if (ta) {
    mc.noalias() += alpha * (ma.transpose() * mb);
  } else if (tb) {
    mc.noalias() += alpha * (ma * mb.transpose());
  } else {
    mc.noalias() += alpha * (ma * mb);
  }
}

// Sliding-window geometry shared by im2col/col2im: an image of size
// channels×h×w scanned by the kernel at cols_h×cols_w positions.
struct Window {
  std::size_t channels, h, w;
  Hw kernel, stride, padding;
  std::size_t cols_h, cols_w;

  std::size_t rows() const { return channels * kernel.h * kernel.w; }
  std::size_t positions() const { return cols_h * cols_w; }
};

// Columns ox whose kernel tap j lands inside the image row, as [lo, hi).
inline std::pair<std::size_t, std::size_t> valid_columns(const Window& g, std::size_t j) {
  // x = ox * stride + j - padding must satisfy 0 <= x < w.
  const std::size_t s = g.stride.w;
  const std::size_t lo = j >= g.padding.w ? 0 : (g.padding.w - j + s - 1) / s;
  const std::size_t lim = g.w + g.padding.w;  // ox * s + j < lim
  std::size_t hi = lim > j ? (lim - j + s - 1) / s : 0;
  hi = std::min(hi, g.cols_w);
  return {std::min(lo, hi), hi};
}

// Output rows [oy0, oy1) of the column matrix; `col` holds
// rows() × ((oy1 - oy0) · cols_w) values.
template <typename T>
void im2col(const T* image, const Window& g, std::size_t oy0, std::size_t oy1, T* col) {
  const std::size_t block = (oy1 - oy0) * g.cols_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.h * g.w;
    for (std::size_t i = 0; i < g.kernel.h; ++i) {
      for (std::size_t j = 0; j < g.kernel.w; ++j) {
        T* row = col + ((c * g.kernel.h + i) * g.kernel.w + j) * block;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride.h + i) -
                         static_cast<std::ptrdiff_t>(g.padding.h);
          T* out = row + (oy - oy0) * g.cols_w;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(out, out + g.cols_w, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(y) * g.w;
          const auto [lo, hi] = valid_columns(g, j);
          std::fill(out, out + lo, T{0});
          std::fill(out + hi, out + g.cols_w, T{0});
          const T* s0 = src + (lo * g.stride.w + j - g.padding.w);
          if (g.stride.w == 1) {
            std::copy(s0, s0 + (hi - lo), out + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) out[ox] = s0[(ox - lo) * g.stride.w];
          }
        }
      }
    }
  }
}

// Accumulates (+=) a block of column entries back onto the image.
template <typename T>
void col2im(const T* col, const Window& g, std::size_t oy0, std::size_t oy1, T* image) {
  const std::size_t block = (oy1 - oy0) * g.cols_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.h * g.w;
    for (std::size_t i = 0; i < g.kernel.h; ++i) {
      for (std::size_t j = 0; j < g.kernel.w; ++j) {
        const T* row = col + ((c * g.kernel.h + i) * g.kernel.w + j) * block;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride.h + i) -
                         static_cast<std::ptrdiff_t>(g.padding.h);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = plane + static_cast<std::size_t>(y) * g.w;
          const T* in = row + (oy - oy0) * g.cols_w;
          const auto [lo, hi] = valid_columns(g, j);
          T* d0 = dst + (lo * g.stride.w + j - g.padding.w);
          if (g.stride.w == 1) {
            for (std::size_t ox = lo; ox < hi; ++ox) d0[ox - lo] += in[ox];
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) d0[(ox - lo) * g.stride.w] += in[ox];
          }
        }
      }
    }
  }
}

// Output rows per column block, sized so one block stays cache resident.
template <typename T>
std::size_t block_rows(const Window& g) {
  constexpr std::size_t kBudget = std::size_t{1} << 19;  // bytes
  const std::size_t per_row = g.rows() * g.cols_w * sizeof(T);
  return std::clamp<std::size_t>(kBudget / std::max<std::size_t>(per_row, 1), 1, g.cols_h);
}

template <typename T>
void check_conv_params(const char* op, const ImageDims& d, const ConvSpec& spec,
                       const Tensor<T>& weight, const Tensor<T>& bias) {
  spec.validate();
  if (d.c != spec.in_channels) {
    throw ShapeError(std::string(op) + ": input channel dimension (dim " +
                     std::to_string(channel_axis(d)) + ") is " + std::to_string(d.c) +
                     " but spec.in_channels is " + std::to_string(spec.in_channels));
  }
  if (!weight.defined() || weight.shape() != spec.weight_shape()) {
    throw ShapeError(std::string(op) + ": weight shape " +
                     (weight.defined() ? to_string(weight.shape()) : std::string("<none>")) +
                     " does not match expected " + to_string(spec.weight_shape()));
  }
  if (bias.defined() && bias.numel() != spec.out_channels) {
    throw ShapeError(std::string(op) + ": bias length " + std::to_string(bias.numel()) +
                     " does not match out_channels " + std::to_string(spec.out_channels));
  }
}

template <typename T>
std::vector<std::shared_ptr<Node<T>>> conv_parents(const Tensor<T>& input, const Tensor<T>& weight,
                                                   const Tensor<T>& bias) {
  std::vector<std::shared_ptr<Node<T>>> parents{input.node(), weight.node()};
  if (bias.defined()) parents.push_back(bias.node());
  return parents;
}

template <typename T>
void add_bias(T* out, const T* bias, std::size_t channels, std::size_t plane) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T b = bias[c];
    T* p = out + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] += b;
  }
}

template <typename T>
void accumulate_bias_grad(const T* grad, std::size_t channels, std::size_t plane, T* bias_grad) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T* p = grad + c * plane;
    T acc{0};
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    bias_grad[c] += acc;
  }
}

template <typename T>
constexpr T sigmoid_upper() {
  // Largest value strictly below 1.
  return T{1} - std::numeric_limits<T>::epsilon() / T{2};
}

template <typename T>
T stable_sigmoid(T x) {
  T s;
  if (x >= T{0}) {
    s = T{1} / (T{1} + std::exp(-x));
  } else {
    const T e = std::exp(x);
    s = e / (T{1} + e);
  }
  return std::clamp(s, std::numeric_limits<T>::denorm_min(), sigmoid_upper<T>());
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

// Pairwise summation keeps rounding error at O(log n) ulps.
template <typename T>
double pairwise_sum(const T* v, std::size_t n) {
  if (n <= 64) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(v[i]);
    return acc;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

Shape as_rank4(const Shape& s) {
  Shape out(4, 1);
  if (s.size() > 4) throw ShapeError("expected rank <= 4, got " + to_string(s));
  std::copy(s.begin(), s.end(), out.begin() + static_cast<std::ptrdiff_t>(4 - s.size()));
  return out;
}

}  // namespace

Hw ConvSpec::output_size(Hw input) const {
  validate();
  if (!transposed) {
    const std::size_t ph = input.h + 2 * padding.h;
    const std::size_t pw = input.w + 2 * padding.w;
    if (ph < kernel.h || pw < kernel.w) {
      throw ShapeError("conv2d: kernel " + std::to_string(kernel.h) + "x" +
                       std::to_string(kernel.w) + " does not fit padded input " +
                       std::to_string(ph) + "x" + std::to_string(pw));
    }
    return {(ph - kernel.h) / stride.h + 1, (pw - kernel.w) / stride.w + 1};
  }
  const auto out_h = static_cast<std::ptrdiff_t>((input.h - 1) * stride.h + kernel.h) -
                     static_cast<std::ptrdiff_t>(2 * padding.h);
  const auto out_w = static_cast<std::ptrdiff_t>((input.w - 1) * stride.w + kernel.w) -
                     static_cast<std::ptrdiff_t>(2 * padding.w);
  if (input.h == 0 || input.w == 0 || out_h <= 0 || out_w <= 0) {
    throw ShapeError("conv_transpose2d: parameters yield non-positive output size " +
                     std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  return {static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w)};
}

Shape ConvSpec::weight_shape() const {
  if (transposed) return {in_channels, out_channels, kernel.h, kernel.w};
  return {out_channels, in_channels, kernel.h, kernel.w};
}

double ConvSpec::fan_in() const {
  const double taps = static_cast<double>(in_channels * kernel.h * kernel.w);
  if (!transposed) return taps;
  // Each transposed-conv output only sees the taps aligned with its stride phase.
  return std::max(1.0, taps / static_cast<double>(stride.h * stride.w));
}

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) throw ShapeError("ConvSpec: channel counts must be positive");
  if (kernel.h == 0 || kernel.w == 0) throw ShapeError("ConvSpec: kernel size must be positive");
  if (stride.h == 0 || stride.w == 0) throw ShapeError("ConvSpec: stride must be positive");
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  if (spec.transposed) throw ShapeError("conv2d: spec is marked transposed");
  const ImageDims d = image_dims(input.shape(), "conv2d");
  check_conv_params("conv2d", d, spec, weight, bias);
  const Hw out = spec.output_size({d.h, d.w});
  const Window g{d.c, d.h, d.w, spec.kernel, spec.stride, spec.padding, out.h, out.w};
  const std::size_t rows = g.rows(), positions = g.positions(), cout = spec.out_channels;

  const std::size_t step = block_rows<T>(g);
  std::vector<T> result(d.n * cout * positions);
  std::vector<T> col(rows * step * g.cols_w);
  const T* x = input.data().data();
  const T* wt = weight.data().data();
  for (std::size_t n = 0; n < d.n; ++n) {
    T* o = result.data() + n * cout * positions;
    for (std::size_t oy = 0; oy < g.cols_h; oy += step) {
      const std::size_t end = std::min(g.cols_h, oy + step), block = (end - oy) * g.cols_w;
      im2col(x + n * d.item(), g, oy, end, col.data());
      gemm(false, false, cout, block, rows, T{1}, wt, rows, col.data(), block, T{0}, o + oy * g.cols_w, positions);
    }
    if (bias.defined()) add_bias(o, bias.data().data(), cout, positions);
  }

  const bool has_bias = bias.defined();
  return make_result<T>(
      d.shape_with(cout, out.h, out.w), std::move(result), conv_parents(input, weight, bias),
      [d, g, cout, has_bias](Node<T>& self) {
        auto& in = *self.parents[0];
        auto& w = *self.parents[1];
        Node<T>* b = has_bias ? self.parents[2].get() : nullptr;
        const std::size_t rows = g.rows(), positions = g.positions(), step = block_rows<T>(g);
        std::vector<T> col(rows * step * g.cols_w);
        for (std::size_t n = 0; n < d.n; ++n) {
          const T* go = self.grad.data() + n * cout * positions;
          for (std::size_t oy = 0; oy < g.cols_h; oy += step) {
            const std::size_t end = std::min(g.cols_h, oy + step), block = (end - oy) * g.cols_w;
            const T* gob = go + oy * g.cols_w;
            if (w.requires_grad) {
              im2col(in.data.data() + n * d.item(), g, oy, end, col.data());
              gemm(false, true, cout, rows, block, T{1}, gob, positions, col.data(), block, T{1},
                   w.ensure_grad().data(), rows);
            }
            if (in.requires_grad) {
              gemm(true, false, rows, block, cout, T{1}, w.data.data(), rows, gob, positions, T{0}, col.data(),
                   block);
              col2im(col.data(), g, oy, end, in.ensure_grad().data() + n * d.item());
            }
          }
          if (b && b->requires_grad) accumulate_bias_grad(go, cout, positions, b->ensure_grad().data());
        }
      });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weight,
                           const Tensor<T>& bias) {
  if (!spec.transposed) throw ShapeError("conv_transpose2d: spec is not marked transposed");
  const ImageDims d = image_dims(input.shape(), "conv_transpose2d");
  check_conv_params("conv_transpose2d", d, spec, weight, bias);
  const Hw out = spec.output_size({d.h, d.w});
  const std::size_t cout = spec.out_channels;
  // The output image is scanned by the kernel at exactly the input positions.
  const Window g{cout, out.h, out.w, spec.kernel, spec.stride, spec.padding, d.h, d.w};
  const std::size_t rows = g.rows(), positions = g.positions(), cin = d.c;
  const std::size_t out_item = cout * out.h * out.w;

  const std::size_t step = block_rows<T>(g);
  std::vector<T> result(d.n * out_item, T{0});
  std::vector<T> col(rows * step * g.cols_w);
  const T* x = input.data().data();
  const T* wt = weight.data().data();
  for (std::size_t n = 0; n < d.n; ++n) {
    T* o = result.data() + n * out_item;
    for (std::size_t iy = 0; iy < g.cols_h; iy += step) {
      const std::size_t end = std::min(g.cols_h, iy + step), block = (end - iy) * g.cols_w;
      gemm(true, false, rows, block, cin, T{1}, wt, rows, x + n * d.item() + iy * g.cols_w, positions, T{0},
           col.data(), block);
      col2im(col.data(), g, iy, end, o);
    }
    if (bias.defined()) add_bias(o, bias.data().data(), cout, out.h * out.w);
  }

  const bool has_bias = bias.defined();
  return make_result<T>(
      d.shape_with(cout, out.h, out.w), std::move(result), conv_parents(input, weight, bias),
      [d, g, cin, cout, out_item, has_bias](Node<T>& self) {
        auto& in = *self.parents[0];
        auto& w = *self.parents[1];
        Node<T>* b = has_bias ? self.parents[2].get() : nullptr;
        const std::size_t rows = g.rows(), positions = g.positions(), step = block_rows<T>(g);
        std::vector<T> col(rows * step * g.cols_w);
        for (std::size_t n = 0; n < d.n; ++n) {
          const T* go = self.grad.data() + n * out_item;
          for (std::size_t iy = 0; iy < g.cols_h && (w.requires_grad || in.requires_grad); iy += step) {
            const std::size_t end = std::min(g.cols_h, iy + step), block = (end - iy) * g.cols_w;
            const std::size_t offset = n * d.item() + iy * g.cols_w;
            im2col(go, g, iy, end, col.data());
            if (in.requires_grad) {
              gemm(false, false, cin, block, rows, T{1}, w.data.data(), rows, col.data(), block, T{1},
                   in.ensure_grad().data() + offset, positions);
            }
            if (w.requires_grad) {
              gemm(false, true, cin, rows, block, T{1}, in.data.data() + offset, positions, col.data(), block, T{1},
                   w.ensure_grad().data(), rows);
            }
          }
          if (b && b->requires_grad) {
            accumulate_bias_grad(go, cout, g.h * g.w, b->ensure_grad().data());
          }
        }
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(in[i]);
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T s = self.data[i];
      g[i] += self.grad[i] * s * (T{1} - s);
    }
  });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * stable_sigmoid(in[i]);
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = p.data[i];
      const T s = stable_sigmoid(v);
      g[i] += self.grad[i] * (s + v * s * (T{1} - s));
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    for (auto& parent : self.parents) {
      if (!parent->requires_grad) continue;
      auto& g = parent->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor) {
  const T f = static_cast<T>(factor);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * f;
  return make_result<T>(a.shape(), std::move(out), {a.node()}, [f](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * f;
  });
}

template <typename T>
Tensor<T> mul_broadcast(const Tensor<T>& x, const Tensor<T>& gate) {
  if (x.rank() != gate.rank()) {
    throw ShapeError("mul_broadcast: rank mismatch " + to_string(x.shape()) + " vs " +
                     to_string(gate.shape()));
  }
  for (std::size_t i = 0; i < x.rank(); ++i) {
    if (gate.dim(i) != x.dim(i) && gate.dim(i) != 1) {
      throw ShapeError("mul_broadcast: gate dimension " + std::to_string(i) + " is " +
                       std::to_string(gate.dim(i)) + ", expected 1 or " + std::to_string(x.dim(i)));
    }
  }
  const Shape xs = as_rank4(x.shape());
  const Shape gs = as_rank4(gate.shape());
  // Gate strides with broadcast dimensions pinned to stride 0.
  std::array<std::size_t, 4> gstride{};
  std::size_t acc = 1;
  for (int i = 3; i >= 0; --i) {
    gstride[i] = gs[i] == 1 ? 0 : acc;
    acc *= gs[i];
  }
  // Visits x row by row; fn(x_offset, gate_offset, gate_step, length).
  auto for_rows = [xs, gstride](auto&& fn) {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < xs[0]; ++a)
      for (std::size_t b = 0; b < xs[1]; ++b)
        for (std::size_t c = 0; c < xs[2]; ++c) {
          fn(flat, a * gstride[0] + b * gstride[1] + c * gstride[2], gstride[3], xs[3]);
          flat += xs[3];
        }
  };

  std::vector<T> out(x.numel());
  const T* xv = x.data().data();
  const T* gv = gate.data().data();
  for_rows([&](std::size_t i, std::size_t j, std::size_t gs3, std::size_t len) {
    if (gs3 == 0) {
      for (std::size_t d = 0; d < len; ++d) out[i + d] = xv[i + d] * gv[j];
    } else {
      for (std::size_t d = 0; d < len; ++d) out[i + d] = xv[i + d] * gv[j + d];
    }
  });
  return make_result<T>(x.shape(), std::move(out), {x.node(), gate.node()}, [for_rows](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    const T* up = self.grad.data();
    if (px.requires_grad) {
      T* g = px.ensure_grad().data();
      const T* gate_v = pg.data.data();
      for_rows([&](std::size_t i, std::size_t j, std::size_t gs3, std::size_t len) {
        if (gs3 == 0) {
          for (std::size_t d = 0; d < len; ++d) g[i + d] += up[i + d] * gate_v[j];
        } else {
          for (std::size_t d = 0; d < len; ++d) g[i + d] += up[i + d] * gate_v[j + d];
        }
      });
    }
    if (pg.requires_grad) {
      T* g = pg.ensure_grad().data();
      const T* x_v = px.data.data();
      for_rows([&](std::size_t i, std::size_t j, std::size_t gs3, std::size_t len) {
        if (gs3 == 0) {
          T acc{0};
          for (std::size_t d = 0; d < len; ++d) acc += up[i + d] * x_v[i + d];
          g[j] += acc;
        } else {
          for (std::size_t d = 0; d < len; ++d) g[j + d] += up[i + d] * x_v[i + d];
        }
      });
    }
  });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const ImageDims d = image_dims(x.shape(), "global_avg_pool");
  const std::size_t plane = d.plane();
  std::vector<T> out(d.n * d.c);
  for (std::size_t i = 0; i < out.size(); ++i) {
    T acc{0};
    const T* p = x.data().data() + i * plane;
    for (std::size_t k = 0; k < plane; ++k) acc += p[k];
    out[i] = acc / static_cast<T>(plane);
  }
  return make_result<T>(d.shape_with(d.c, 1, 1), std::move(out), {x.node()}, [plane](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    const T inv = T{1} / static_cast<T>(plane);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T v = self.grad[i] * inv;
      T* p = g.data() + i * plane;
      for (std::size_t k = 0; k < plane; ++k) p[k] += v;
    }
  });
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, std::size_t factor) {
  if (factor == 0) throw ShapeError("upsample_nearest: factor must be positive");
  const ImageDims d = image_dims(x.shape(), "upsample_nearest");
  const std::size_t oh = d.h * factor, ow = d.w * factor;
  std::vector<T> out(d.n * d.c * oh * ow);
  const std::size_t planes = d.n * d.c;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data().data() + p * d.plane();
    T* dst = out.data() + p * oh * ow;
    for (std::size_t y = 0; y < d.h; ++y) {
      T* row = dst + y * factor * ow;
      for (std::size_t xx = 0; xx < d.w; ++xx) std::fill_n(row + xx * factor, factor, src[y * d.w + xx]);
      for (std::size_t r = 1; r < factor; ++r) std::copy_n(row, ow, row + r * ow);
    }
  }
  return make_result<T>(d.shape_with(d.c, oh, ow), std::move(out), {x.node()},
                        [d, factor, oh, ow, planes](Node<T>& self) {
                          auto& g = self.parents[0]->ensure_grad();
                          for (std::size_t p = 0; p < planes; ++p) {
                            const T* src = self.grad.data() + p * oh * ow;
                            T* dst = g.data() + p * d.plane();
                            for (std::size_t y = 0; y < oh; ++y) {
                              T* drow = dst + (y / factor) * d.w;
                              const T* srow = src + y * ow;
                              for (std::size_t xx = 0; xx < d.w; ++xx) {
                                T acc{0};
                                for (std::size_t f = 0; f < factor; ++f) acc += srow[xx * factor + f];
                                drow[xx] += acc;
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const ImageDims da = image_dims(a.shape(), "concat_channels");
  const ImageDims db = image_dims(b.shape(), "concat_channels");
  if (da.batched != db.batched || da.n != db.n || da.h != db.h || da.w != db.w) {
    throw ShapeError("concat_channels: spatial mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const std::size_t ia = da.item(), ib = db.item();
  std::vector<T> out(da.n * (ia + ib));
  for (std::size_t n = 0; n < da.n; ++n) {
    std::copy_n(a.data().data() + n * ia, ia, out.data() + n * (ia + ib));
    std::copy_n(b.data().data() + n * ib, ib, out.data() + n * (ia + ib) + ia);
  }
  return make_result<T>(da.shape_with(da.c + db.c, da.h, da.w), std::move(out), {a.node(), b.node()},
                        [n_items = da.n, ia, ib](Node<T>& self) {
                          auto& pa = *self.parents[0];
                          auto& pb = *self.parents[1];
                          for (std::size_t n = 0; n < n_items; ++n) {
                            const T* src = self.grad.data() + n * (ia + ib);
                            if (pa.requires_grad) {
                              T* g = pa.ensure_grad().data() + n * ia;
                              for (std::size_t i = 0; i < ia; ++i) g[i] += src[i];
                            }
                            if (pb.requires_grad) {
                              T* g = pb.ensure_grad().data() + n * ib;
                              for (std::size_t i = 0; i < ib; ++i) g[i] += src[ia + i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  const ImageDims d = image_dims(x.shape(), "slice_channels");
  if (begin > end || end > d.c) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + std::to_string(d.c) + " channels");
  }
  const std::size_t len = (end - begin) * d.plane();
  const std::size_t offset = begin * d.plane();
  std::vector<T> out(d.n * len);
  for (std::size_t n = 0; n < d.n; ++n) {
    std::copy_n(x.data().data() + n * d.item() + offset, len, out.data() + n * len);
  }
  return make_result<T>(d.shape_with(end - begin, d.h, d.w), std::move(out), {x.node()},
                        [d, len, offset](Node<T>& self) {
                          auto& g = self.parents[0]->ensure_grad();
                          for (std::size_t n = 0; n < d.n; ++n) {
                            T* dst = g.data() + n * d.item() + offset;
                            const T* src = self.grad.data() + n * len;
                            for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
                          }
                        });
}

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& items) {
  if (items.empty()) throw ShapeError("stack: no tensors given");
  const Shape& inner = items.front().shape();
  const std::size_t len = items.front().numel();
  std::vector<T> out;
  out.reserve(items.size() * len);
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (const auto& t : items) {
    if (t.shape() != inner) {
      throw ShapeError("stack: shape mismatch " + to_string(t.shape()) + " vs " + to_string(inner));
    }
    out.insert(out.end(), t.data().begin(), t.data().end());
    parents.push_back(t.node());
  }
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return make_result<T>(std::move(shape), std::move(out), std::move(parents), [len](Node<T>& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[k * len + i];
    }
  });
}

template <typename T>
Tensor<T> select(const Tensor<T>& x, std::size_t index) {
  if (x.rank() == 0 || index >= x.dim(0)) {
    throw ShapeError("select: index " + std::to_string(index) + " outside " + to_string(x.shape()));
  }
  const std::size_t len = x.numel() / x.dim(0);
  std::vector<T> out(x.data().begin() + static_cast<std::ptrdiff_t>(index * len),
                     x.data().begin() + static_cast<std::ptrdiff_t>((index + 1) * len));
  Shape shape(x.shape().begin() + 1, x.shape().end());
  return make_result<T>(std::move(shape), std::move(out), {x.node()}, [index, len](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < len; ++i) g[index * len + i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(out), {x.node()}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  const T acc = static_cast<T>(pairwise_sum(x.data().data(), x.numel()));
  return make_result<T>({1}, {acc}, {x.node()}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: output size must be positive");
  const ImageDims d = image_dims(input.shape(), "bilinear_resize");

  struct Tap {
    std::size_t i0, i1;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double src = std::max(0.0, (static_cast<double>(o) + 0.5) * ratio - 0.5);
      const auto i0 = std::min(static_cast<std::size_t>(src), in - 1);
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, i0 == i1 ? 0.0 : src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(d.h, out_h);
  const auto tx = taps(d.w, out_w);

  std::vector<T> out(d.n * d.c * out_h * out_w);
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    const T* src = input.data().data() + p * d.plane();
    T* dst = out.data() + p * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const T* r0 = src + ty[y].i0 * d.w;
      const T* r1 = src + ty[y].i1 * d.w;
      const double fy = ty[y].frac;
      for (std::size_t x = 0; x < out_w; ++x) {
        const double fx = tx[x].frac;
        const double top = static_cast<double>(r0[tx[x].i0]) * (1.0 - fx) + static_cast<double>(r0[tx[x].i1]) * fx;
        const double bot = static_cast<double>(r1[tx[x].i0]) * (1.0 - fx) + static_cast<double>(r1[tx[x].i1]) * fx;
        // Exact constant preservation: a convex combination of equal values.
        double v = top * (1.0 - fy) + bot * fy;
        const double lo = std::min({r0[tx[x].i0], r0[tx[x].i1], r1[tx[x].i0], r1[tx[x].i1]});
        const double hi = std::max({r0[tx[x].i0], r0[tx[x].i1], r1[tx[x].i0], r1[tx[x].i1]});
        dst[y * out_w + x] = static_cast<T>(std::clamp(v, lo, hi));
      }
    }
  }
  return Tensor<T>::from(d.shape_with(d.c, out_h, out_w), std::move(out));
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("dot", a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

#define PSEG_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> conv2d(const Tensor<T>&, const ConvSpec&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const ConvSpec&, const Tensor<T>&,         \
                                      const Tensor<T>&);                                         \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                  \
  template Tensor<T> silu(const Tensor<T>&);                                                     \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, double);                                            \
  template Tensor<T> mul_broadcast(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                          \
  template Tensor<T> upsample_nearest(const Tensor<T>&, std::size_t);                            \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> stack(const std::vector<Tensor<T>>&);                                       \
  template Tensor<T> select(const Tensor<T>&, std::size_t);                                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> bilinear_resize(const Tensor<T>&, std::size_t, std::size_t);                \
  template double dot(const Tensor<T>&, const Tensor<T>&);

PSEG_INSTANTIATE_OPS(float)
PSEG_INSTANTIATE_OPS(double)

}  // namespace pseg::diff
