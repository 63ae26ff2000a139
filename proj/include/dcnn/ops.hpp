#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dcnn/errors.hpp"
#include "dcnn/tensor.hpp"

namespace dcnn {

enum class Padding { valid, same };

/// Geometry of one convolution layer. Dilated layers keep stride (1,1);
/// strided layers keep filter_rows == 1 and dilation (1,1) so they only
/// shrink the time axis.
struct ConvParams {
  std::int64_t filter_rows = 1;
  std::int64_t filter_cols = 1;
  std::int64_t out_channels = 1;
  std::int64_t dilation_rows = 1;
  std::int64_t dilation_cols = 1;
  std::int64_t stride_rows = 1;
  std::int64_t stride_cols = 1;
  Padding padding = Padding::valid;

  bool operator==(const ConvParams&) const = default;
};

struct OpGradients {
  Tensor d_input;
  Tensor d_weights;
  Tensor d_bias;
};

namespace detail {

inline double dot(const double* a, const double* b, std::int64_t n) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

inline void axpy(double* y, double a, const double* x, std::int64_t n) {
#pragma omp simd
  for (std::int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

struct AxisPlan {
  std::int64_t out = 0;
  std::int64_t pad_lo = 0;  // leading zeros
  std::int64_t pad_hi = 0;  // trailing zeros; gets the extra one when odd
};

inline std::int64_t effective_kernel(std::int64_t f, std::int64_t d) { return (f - 1) * d + 1; }

inline AxisPlan plan_axis(std::int64_t n, std::int64_t f, std::int64_t d, std::int64_t s,
                          Padding padding, const char* axis) {
  const std::int64_t keff = effective_kernel(f, d);
  AxisPlan plan;
  if (padding == Padding::valid) {
    if (n < keff)
      throw ShapeError(std::string("conv2d: effective kernel ") + std::to_string(keff) +
                       " exceeds input extent " + std::to_string(n) + " on " + axis + " axis");
    plan.out = (n - keff) / s + 1;
  } else {
    plan.out = (n + s - 1) / s;
    const std::int64_t needed = (plan.out - 1) * s + keff - n;
    const std::int64_t total = std::max<std::int64_t>(0, needed);
    plan.pad_lo = total / 2;
    plan.pad_hi = total - plan.pad_lo;
  }
  return plan;
}

inline void validate_conv_params(const ConvParams& p) {
  if (p.filter_rows < 1 || p.filter_cols < 1 || p.out_channels < 1 || p.dilation_rows < 1 ||
      p.dilation_cols < 1 || p.stride_rows < 1 || p.stride_cols < 1)
    throw ShapeError("conv2d: all ConvParams counts must be >= 1");
}

// Copies one sample into a zero-padded [C, Rp, Wp] buffer.
inline void pad_sample(const double* in, std::int64_t channels, std::int64_t rows,
                       std::int64_t cols, const AxisPlan& rp, const AxisPlan& wp,
                       std::vector<double>& padded) {
  const std::int64_t rows_p = rows + rp.pad_lo + rp.pad_hi;
  const std::int64_t cols_p = cols + wp.pad_lo + wp.pad_hi;
  padded.assign(static_cast<std::size_t>(channels * rows_p * cols_p), 0.0);
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* src = in + (c * rows + r) * cols;
      double* dst = padded.data() + ((c * rows_p) + r + rp.pad_lo) * cols_p + wp.pad_lo;
      std::copy(src, src + cols, dst);
    }
}

// k-major im2col: cols[k][s] with k = (c, i, j) flattened like the weight
// tensor and s = (r', w') flattened like the output. Keeping k-major rows
// lets the forward pass accumulate tap-by-tap in the same order as a naive
// direct convolution.
inline void im2col(const std::vector<double>& padded, std::int64_t channels, std::int64_t rows_p,
                   std::int64_t cols_p, const ConvParams& p, std::int64_t out_r,
                   std::int64_t out_w, std::vector<double>& cols) {
  const std::int64_t spatial = out_r * out_w;
  cols.resize(static_cast<std::size_t>(channels * p.filter_rows * p.filter_cols * spatial));
  double* dst = cols.data();
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::int64_t i = 0; i < p.filter_rows; ++i)
      for (std::int64_t j = 0; j < p.filter_cols; ++j)
        for (std::int64_t r = 0; r < out_r; ++r) {
          const double* src =
              padded.data() + (c * rows_p + r * p.stride_rows + i * p.dilation_rows) * cols_p +
              j * p.dilation_cols;
          if (p.stride_cols == 1) {
            std::copy(src, src + out_w, dst);
            dst += out_w;
          } else {
            for (std::int64_t w = 0; w < out_w; ++w) *dst++ = src[w * p.stride_cols];
          }
        }
}

struct ConvPlan {
  AxisPlan row, col;
  std::int64_t batch, channels, rows, cols, filters, kdim, spatial;
};

inline ConvPlan plan_conv(const Tensor& input, const Tensor& weights, const ConvParams& p) {
  validate_conv_params(p);
  if (input.rank() != 4)
    throw ShapeError("conv2d: input must be rank 4, got " + extents_to_string(input.shape()));
  if (weights.rank() != 4)
    throw ShapeError("conv2d: weights must be rank 4, got " + extents_to_string(weights.shape()));
  if (weights.extent(0) != p.out_channels || weights.extent(2) != p.filter_rows ||
      weights.extent(3) != p.filter_cols)
    throw ShapeError("conv2d: weight shape " + extents_to_string(weights.shape()) +
                     " inconsistent with ConvParams");
  if (weights.extent(1) != input.extent(1))
    throw ShapeError("conv2d: weights expect " + std::to_string(weights.extent(1)) +
                     " input channels, input has " + std::to_string(input.extent(1)));
  ConvPlan plan;
  plan.batch = input.extent(0);
  plan.channels = input.extent(1);
  plan.rows = input.extent(2);
  plan.cols = input.extent(3);
  plan.filters = p.out_channels;
  plan.row = plan_axis(plan.rows, p.filter_rows, p.dilation_rows, p.stride_rows, p.padding, "row");
  plan.col = plan_axis(plan.cols, p.filter_cols, p.dilation_cols, p.stride_cols, p.padding, "col");
  plan.kdim = plan.channels * p.filter_rows * p.filter_cols;
  plan.spatial = plan.row.out * plan.col.out;
  return plan;
}

}  // namespace detail

/// out[b,f,r,w] = bias[f] + sum_{c,i,j} in[b,c, r*sr + i*dr - pad, w*sc + j*dc - pad] * w[f,c,i,j]
inline Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                             const ConvParams& p) {
  const detail::ConvPlan plan = detail::plan_conv(input, weights, p);
  if (bias.rank() != 1 || bias.extent(0) != plan.filters)
    throw ShapeError("conv2d: bias must have shape [" + std::to_string(plan.filters) + "]");

  Tensor out({plan.batch, plan.filters, plan.row.out, plan.col.out});
  const std::int64_t rows_p = plan.rows + plan.row.pad_lo + plan.row.pad_hi;
  const std::int64_t cols_p = plan.cols + plan.col.pad_lo + plan.col.pad_hi;

  std::vector<double> padded, cols;
  for (std::int64_t b = 0; b < plan.batch; ++b) {
    detail::pad_sample(input.data() + b * plan.channels * plan.rows * plan.cols, plan.channels,
                       plan.rows, plan.cols, plan.row, plan.col, padded);
    detail::im2col(padded, plan.channels, rows_p, cols_p, p, plan.row.out, plan.col.out, cols);
    for (std::int64_t f = 0; f < plan.filters; ++f) {
      double* dst = out.data() + (b * plan.filters + f) * plan.spatial;
      std::fill(dst, dst + plan.spatial, bias[f]);
      const double* wrow = weights.data() + f * plan.kdim;
      for (std::int64_t k = 0; k < plan.kdim; ++k)
        detail::axpy(dst, wrow[k], cols.data() + k * plan.spatial, plan.spatial);
    }
  }
  return out;
}

inline Extents conv2d_output_shape(const Tensor& input, const Tensor& weights,
                                   const ConvParams& p) {
  const detail::ConvPlan plan = detail::plan_conv(input, weights, p);
  return {plan.batch, plan.filters, plan.row.out, plan.col.out};
}

inline OpGradients conv2d_backward(const Tensor& input, const Tensor& weights, const ConvParams& p,
                                   const Tensor& d_out) {
  const detail::ConvPlan plan = detail::plan_conv(input, weights, p);
  const Extents want{plan.batch, plan.filters, plan.row.out, plan.col.out};
  if (d_out.shape() != want)
    throw ShapeError("conv2d_backward: d_out shape " + extents_to_string(d_out.shape()) +
                     " != forward output shape " + extents_to_string(want));

  OpGradients g;
  g.d_input = Tensor(input.shape());
  g.d_weights = Tensor(weights.shape());
  g.d_bias = Tensor({plan.filters});

  const std::int64_t rows_p = plan.rows + plan.row.pad_lo + plan.row.pad_hi;
  const std::int64_t cols_p = plan.cols + plan.col.pad_lo + plan.col.pad_hi;

  std::vector<double> padded, cols, d_cols, d_padded;
  for (std::int64_t b = 0; b < plan.batch; ++b) {
    detail::pad_sample(input.data() + b * plan.channels * plan.rows * plan.cols, plan.channels,
                       plan.rows, plan.cols, plan.row, plan.col, padded);
    detail::im2col(padded, plan.channels, rows_p, cols_p, p, plan.row.out, plan.col.out, cols);

    const double* dy = d_out.data() + b * plan.filters * plan.spatial;

    for (std::int64_t f = 0; f < plan.filters; ++f) {
      const double* dyf = dy + f * plan.spatial;
      double acc = 0.0;
      for (std::int64_t s = 0; s < plan.spatial; ++s) acc += dyf[s];
      g.d_bias[f] += acc;
      double* dwrow = g.d_weights.data() + f * plan.kdim;
      for (std::int64_t k = 0; k < plan.kdim; ++k)
        dwrow[k] += detail::dot(dyf, cols.data() + k * plan.spatial, plan.spatial);
    }

    // d_cols = W^T * d_out, then scatter back through the im2col map; the
    // gradients that land on padding zeros are dropped with the crop.
    d_cols.assign(cols.size(), 0.0);
    for (std::int64_t f = 0; f < plan.filters; ++f) {
      const double* wrow = weights.data() + f * plan.kdim;
      const double* dyf = dy + f * plan.spatial;
      for (std::int64_t k = 0; k < plan.kdim; ++k)
        detail::axpy(d_cols.data() + k * plan.spatial, wrow[k], dyf, plan.spatial);
    }
    d_padded.assign(static_cast<std::size_t>(plan.channels * rows_p * cols_p), 0.0);
    const double* src = d_cols.data();
    for (std::int64_t c = 0; c < plan.channels; ++c)
      for (std::int64_t i = 0; i < p.filter_rows; ++i)
        for (std::int64_t j = 0; j < p.filter_cols; ++j)
          for (std::int64_t r = 0; r < plan.row.out; ++r) {
            double* dst = d_padded.data() +
                          (c * rows_p + r * p.stride_rows + i * p.dilation_rows) * cols_p +
                          j * p.dilation_cols;
            for (std::int64_t w = 0; w < plan.col.out; ++w) dst[w * p.stride_cols] += *src++;
          }
    double* din = g.d_input.data() + b * plan.channels * plan.rows * plan.cols;
    for (std::int64_t c = 0; c < plan.channels; ++c)
      for (std::int64_t r = 0; r < plan.rows; ++r) {
        const double* prow =
            d_padded.data() + (c * rows_p + r + plan.row.pad_lo) * cols_p + plan.col.pad_lo;
        std::copy(prow, prow + plan.cols, din + (c * plan.rows + r) * plan.cols);
      }
  }
  return g;
}

inline Tensor relu_forward(const Tensor& x) {
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

// subgradient at exactly 0 is 0
inline Tensor relu_backward(const Tensor& x, const Tensor& d_out) {
  if (!x.same_shape(d_out))
    throw ShapeError("relu_backward: shape mismatch " + extents_to_string(x.shape()) + " vs " +
                     extents_to_string(d_out.shape()));
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? d_out[i] : 0.0;
  return out;
}

/// y = x W + b with x [B,N], W [N,U], b [U].
inline Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
    throw ShapeError("dense: expected x [B,N], W [N,U], b [U]");
  const std::int64_t batch = x.extent(0), in = x.extent(1);
  const std::int64_t units = w.extent(1);
  if (w.extent(0) != in || b.extent(0) != units)
    throw ShapeError("dense: inner dimensions disagree, x " + extents_to_string(x.shape()) +
                     " W " + extents_to_string(w.shape()) + " b " + extents_to_string(b.shape()));
  Tensor y({batch, units});
  for (std::int64_t r = 0; r < batch; ++r) {
    double* yrow = y.data() + r * units;
    std::copy(b.data(), b.data() + units, yrow);
    const double* xrow = x.data() + r * in;
    for (std::int64_t n = 0; n < in; ++n) detail::axpy(yrow, xrow[n], w.data() + n * units, units);
  }
  return y;
}

inline OpGradients dense_backward(const Tensor& x, const Tensor& w, const Tensor& d_out) {
  const std::int64_t batch = x.extent(0), in = x.extent(1), units = w.extent(1);
  if (d_out.rank() != 2 || d_out.extent(0) != batch || d_out.extent(1) != units)
    throw ShapeError("dense_backward: d_out shape " + extents_to_string(d_out.shape()) +
                     " != [" + std::to_string(batch) + "," + std::to_string(units) + "]");
  OpGradients g;
  g.d_input = Tensor({batch, in});
  g.d_weights = Tensor({in, units});
  g.d_bias = Tensor({units});
  for (std::int64_t r = 0; r < batch; ++r) {
    const double* dyrow = d_out.data() + r * units;
    const double* xrow = x.data() + r * in;
    double* dxrow = g.d_input.data() + r * in;
    for (std::int64_t n = 0; n < in; ++n) {
      dxrow[n] = detail::dot(dyrow, w.data() + n * units, units);
      detail::axpy(g.d_weights.data() + n * units, xrow[n], dyrow, units);
    }
    detail::axpy(g.d_bias.data(), 1.0, dyrow, units);
  }
  return g;
}

struct SoftmaxXent {
  double loss = 0.0;  // mean of per_sample
  Tensor probs;
  std::vector<double> per_sample;
};

/// Row-wise softmax with the max subtracted, mean cross-entropy over the batch.
inline SoftmaxXent softmax_xent_forward(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw ShapeError("softmax: logits must be [B,K], got " + extents_to_string(logits.shape()));
  const std::int64_t batch = logits.extent(0), classes = logits.extent(1);
  if (static_cast<std::int64_t>(labels.size()) != batch)
    throw ShapeError("softmax: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(batch));
  SoftmaxXent result;
  result.probs = Tensor({batch, classes});
  result.per_sample.resize(static_cast<std::size_t>(batch));
  double total = 0.0;
  for (std::int64_t r = 0; r < batch; ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= classes)
      throw LabelError("softmax: label " + std::to_string(label) + " out of range [0," +
                       std::to_string(classes) + ")");
    const double* zrow = logits.data() + r * classes;
    double* prow = result.probs.data() + r * classes;
    double zmax = zrow[0];
    for (std::int64_t k = 1; k < classes; ++k) zmax = std::max(zmax, zrow[k]);
    double denom = 0.0;
    for (std::int64_t k = 0; k < classes; ++k) {
      prow[k] = std::exp(zrow[k] - zmax);
      denom += prow[k];
    }
    for (std::int64_t k = 0; k < classes; ++k) prow[k] /= denom;
    const double nll = std::log(denom) - (zrow[label] - zmax);
    result.per_sample[static_cast<std::size_t>(r)] = nll;
    total += nll;
  }
  result.loss = total / static_cast<double>(batch);
  return result;
}

/// d_logits[r,k] = (probs[r,k] - 1{k == label_r}) / B
inline Tensor softmax_xent_backward(const Tensor& probs, const std::vector<int>& labels) {
  const std::int64_t batch = probs.extent(0), classes = probs.extent(1);
  if (static_cast<std::int64_t>(labels.size()) != batch)
    throw ShapeError("softmax_backward: label count != batch");
  Tensor d(probs.shape());
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::int64_t r = 0; r < batch; ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= classes)
      throw LabelError("softmax_backward: label out of range");
    for (std::int64_t k = 0; k < classes; ++k)
      d[r * classes + k] = (probs[r * classes + k] - (k == label ? 1.0 : 0.0)) * inv_batch;
  }
  return d;
}

struct L2Penalty {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

/// loss = lambda * sum w^2 over all given tensors; gradient is 2*lambda*w.
/// Biases are excluded by simply not passing them.
inline L2Penalty l2_penalty(const std::vector<const Tensor*>& weight_tensors, double lambda) {
  if (lambda < 0.0) throw ConfigError("l2_penalty: lambda must be >= 0");
  L2Penalty result;
  result.grads.reserve(weight_tensors.size());
  for (const Tensor* w : weight_tensors) {
    Tensor g(w->shape());
    double sq = 0.0;
    for (std::int64_t i = 0; i < w->size(); ++i) {
      const double v = (*w)[i];
      sq += v * v;
      g[i] = 2.0 * lambda * v;
    }
    result.loss += lambda * sq;
    result.grads.push_back(std::move(g));
  }
  return result;
}

}  // namespace dcnn
