/*
 * Copyright 2026 The avfer Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "avfer/core/error.hpp"
#include "avfer/core/rng.hpp"
#include "avfer/core/tensor.hpp"

namespace avfer {

enum class Mode { kTrain, kEval };

template <typename T>
using RowMatrix =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// ---------------------------------------------------------------------------
// Convolutions. Stride 1, "same" zero padding, odd kernels only.
// ---------------------------------------------------------------------------

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

namespace detail {

inline void require_odd_kernel(std::size_t kh, std::size_t kw,
                               const char* what) {
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ConfigError(std::string(what) + ": kernel " + std::to_string(kh) +
                      "x" + std::to_string(kw) +
                      " must have odd extents for same padding");
  }
}

inline void require_bias(const Dims& bias, std::size_t channels,
                         const char* what) {
  if (bias.size() != 1 || bias[0] != channels) {
    throw ShapeError(std::string(what) + ": bias dims " +
                     dims_to_string(bias) + ", expected [" +
                     std::to_string(channels) + "]");
  }
}

// Unfolds one CHW image into a (C*kh*kw) x (H*W) row-major patch matrix.
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t kh, std::size_t kw, T* col) {
  const long ph = static_cast<long>(kh / 2);
  const long pw = static_cast<long>(kw / 2);
  const long h = static_cast<long>(height);
  const long w = static_cast<long>(width);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = x + c * height * width;
    for (std::size_t i = 0; i < kh; ++i) {
      const long di = static_cast<long>(i) - ph;
      for (std::size_t j = 0; j < kw; ++j) {
        const long dj = static_cast<long>(j) - pw;
        const long x0 = std::max(0L, -dj);
        const long x1 = std::min(w, w - dj);
        for (long y = 0; y < h; ++y, col += width) {
          const long sy = y + di;
          if (sy < 0 || sy >= h || x0 >= x1) {
            std::fill(col, col + width, T{0});
            continue;
          }
          std::fill(col, col + x0, T{0});
          std::memcpy(col + x0, plane + sy * w + x0 + dj,
                      static_cast<std::size_t>(x1 - x0) * sizeof(T));
          std::fill(col + x1, col + width, T{0});
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch gradients back onto the image.
template <typename T>
void col2im(const T* col, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t kh, std::size_t kw, T* dx) {
  const long ph = static_cast<long>(kh / 2);
  const long pw = static_cast<long>(kw / 2);
  const long h = static_cast<long>(height);
  const long w = static_cast<long>(width);
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = dx + c * height * width;
    for (std::size_t i = 0; i < kh; ++i) {
      const long di = static_cast<long>(i) - ph;
      for (std::size_t j = 0; j < kw; ++j) {
        const long dj = static_cast<long>(j) - pw;
        const long x0 = std::max(0L, -dj);
        const long x1 = std::min(w, w - dj);
        for (long y = 0; y < h; ++y, col += width) {
          const long sy = y + di;
          if (sy < 0 || sy >= h) continue;
          T* dst = plane + sy * w + dj;
          for (long xx = x0; xx < x1; ++xx) dst[xx] += col[xx];
        }
      }
    }
  }
}

template <typename T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& weight,
                       const Tensor<T>& bias, const char* what) {
  require_rank(input.dims(), 4, what);
  require_rank(weight.dims(), 4, what);
  if (weight.dim(1) != input.dim(1)) {
    throw ShapeError(std::string(what) + ": weight dims " +
                     dims_to_string(weight.dims()) +
                     " do not match input channels " +
                     std::to_string(input.dim(1)));
  }
  require_odd_kernel(weight.dim(2), weight.dim(3), what);
  require_bias(bias.dims(), weight.dim(0), what);
}

}  // namespace detail

/// Cross-correlation with zero "same" padding.
/// input [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,H,W].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  detail::check_conv_shapes(input, weight, bias, "conv2d");
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  const std::size_t cout = weight.dim(0), kh = weight.dim(2),
                    kw = weight.dim(3);
  const std::size_t hw = h * w, k = cin * kh * kw;
  const bool pointwise = kh == 1 && kw == 1;

  Tensor<T> out({n, cout, h, w});
  AlignedVector<T> col(pointwise ? 0 : k * hw);
  ConstMatrixMap<T> wmat(weight.ptr(), cout, k);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.ptr(), cout);
  for (std::size_t s = 0; s < n; ++s) {
    const T* x = input.ptr() + s * cin * hw;
    if (!pointwise) detail::im2col(x, cin, h, w, kh, kw, col.data());
    ConstMatrixMap<T> cmat(pointwise ? x : col.data(), k, hw);
    MatrixMap<T> y(out.ptr() + s * cout * hw, cout, hw);
    y.noalias() = wmat * cmat;
    y.colwise() += b;
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_output) {
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  const std::size_t cout = weight.dim(0), kh = weight.dim(2),
                    kw = weight.dim(3);
  if (grad_output.dims() != Dims{n, cout, h, w}) {
    throw ShapeError("conv2d_backward: grad dims " +
                     dims_to_string(grad_output.dims()));
  }
  const std::size_t hw = h * w, k = cin * kh * kw;
  const bool pointwise = kh == 1 && kw == 1;

  ConvGrads<T> g{Tensor<T>(input.dims()), Tensor<T>(weight.dims()),
                 Tensor<T>({cout})};
  AlignedVector<T> col(pointwise ? 0 : k * hw);
  AlignedVector<T> dcol(pointwise ? 0 : k * hw);
  ConstMatrixMap<T> wmat(weight.ptr(), cout, k);
  MatrixMap<T> dw(g.weight.ptr(), cout, k);
  for (std::size_t s = 0; s < n; ++s) {
    const T* x = input.ptr() + s * cin * hw;
    if (!pointwise) detail::im2col(x, cin, h, w, kh, kw, col.data());
    ConstMatrixMap<T> cmat(pointwise ? x : col.data(), k, hw);
    ConstMatrixMap<T> dy(grad_output.ptr() + s * cout * hw, cout, hw);
    dw.noalias() += dy * cmat.transpose();
    for (std::size_t c = 0; c < cout; ++c) g.bias[c] += dy.row(c).sum();
    T* dx = g.input.ptr() + s * cin * hw;
    if (pointwise) {
      MatrixMap<T>(dx, k, hw).noalias() = wmat.transpose() * dy;
    } else {
      MatrixMap<T>(dcol.data(), k, hw).noalias() = wmat.transpose() * dy;
      detail::col2im(dcol.data(), cin, h, w, kh, kw, dx);
    }
  }
  return g;
}

/// One kh x kw filter per channel. weight [C,1,kh,kw], bias [C].
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias) {
  require_rank(input.dims(), 4, "depthwise_conv2d");
  require_rank(weight.dims(), 4, "depthwise_conv2d");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  if (weight.dim(0) != c || weight.dim(1) != 1) {
    throw ShapeError("depthwise_conv2d: weight dims " +
                     dims_to_string(weight.dims()) + " for " +
                     std::to_string(c) + " input channels");
  }
  const std::size_t kh = weight.dim(2), kw = weight.dim(3);
  detail::require_odd_kernel(kh, kw, "depthwise_conv2d");
  detail::require_bias(bias.dims(), c, "depthwise_conv2d");
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);

  Tensor<T> out(input.dims());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* x = input.ptr() + (s * c + ch) * h * w;
      const T* k = weight.ptr() + ch * kh * kw;
      T* y = out.ptr() + (s * c + ch) * h * w;
      for (long yy = 0; yy < static_cast<long>(h); ++yy) {
        for (long xx = 0; xx < static_cast<long>(w); ++xx) {
          T acc = bias[ch];
          for (long i = 0; i < static_cast<long>(kh); ++i) {
            const long sy = yy + i - ph;
            if (sy < 0 || sy >= static_cast<long>(h)) continue;
            for (long j = 0; j < static_cast<long>(kw); ++j) {
              const long sx = xx + j - pw;
              if (sx < 0 || sx >= static_cast<long>(w)) continue;
              acc += k[i * kw + j] * x[sy * w + sx];
            }
          }
          y[yy * w + xx] = acc;
        }
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> depthwise_conv2d_backward(const Tensor<T>& input,
                                       const Tensor<T>& weight,
                                       const Tensor<T>& grad_output) {
  input.require_same_dims(grad_output, "depthwise_conv2d_backward");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  const std::size_t kh = weight.dim(2), kw = weight.dim(3);
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);

  ConvGrads<T> g{Tensor<T>(input.dims()), Tensor<T>(weight.dims()),
                 Tensor<T>({c})};
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * h * w;
      const T* x = input.ptr() + base;
      const T* dy = grad_output.ptr() + base;
      const T* k = weight.ptr() + ch * kh * kw;
      T* dx = g.input.ptr() + base;
      T* dk = g.weight.ptr() + ch * kh * kw;
      for (long yy = 0; yy < static_cast<long>(h); ++yy) {
        for (long xx = 0; xx < static_cast<long>(w); ++xx) {
          const T d = dy[yy * w + xx];
          g.bias[ch] += d;
          for (long i = 0; i < static_cast<long>(kh); ++i) {
            const long sy = yy + i - ph;
            if (sy < 0 || sy >= static_cast<long>(h)) continue;
            for (long j = 0; j < static_cast<long>(kw); ++j) {
              const long sx = xx + j - pw;
              if (sx < 0 || sx >= static_cast<long>(w)) continue;
              dk[i * kw + j] += d * x[sy * w + sx];
              dx[sy * w + sx] += d * k[i * kw + j];
            }
          }
        }
      }
    }
  }
  return g;
}

/// 1x1 convolution: a per-pixel linear map across channels.
template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& input, const Tensor<T>& weight,
                         const Tensor<T>& bias) {
  require_rank(weight.dims(), 4, "pointwise_conv");
  if (weight.dim(2) != 1 || weight.dim(3) != 1) {
    throw ShapeError("pointwise_conv: weight dims " +
                     dims_to_string(weight.dims()) + " are not [Cout,Cin,1,1]");
  }
  return conv2d(input, weight, bias);
}

template <typename T>
ConvGrads<T> pointwise_conv_backward(const Tensor<T>& input,
                                     const Tensor<T>& weight,
                                     const Tensor<T>& grad_output) {
  return conv2d_backward(input, weight, grad_output);
}

// ---------------------------------------------------------------------------
// Fully connected.
// ---------------------------------------------------------------------------

/// input [N,Din], weight [Dout,Din], bias [Dout] -> [N,Dout].
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  require_rank(input.dims(), 2, "linear");
  require_rank(weight.dims(), 2, "linear");
  if (weight.dim(1) != input.dim(1)) {
    throw ShapeError("linear: input dims " + dims_to_string(input.dims()) +
                     " vs weight dims " + dims_to_string(weight.dims()));
  }
  const std::size_t n = input.dim(0), din = input.dim(1),
                    dout = weight.dim(0);
  detail::require_bias(bias.dims(), dout, "linear");
  Tensor<T> out({n, dout});
  MatrixMap<T> y(out.ptr(), n, dout);
  y.noalias() = ConstMatrixMap<T>(input.ptr(), n, din) *
                ConstMatrixMap<T>(weight.ptr(), dout, din).transpose();
  y.rowwise() +=
      Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.ptr(), dout);
  return out;
}

template <typename T>
ConvGrads<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_output) {
  const std::size_t n = input.dim(0), din = input.dim(1),
                    dout = weight.dim(0);
  if (grad_output.dims() != Dims{n, dout}) {
    throw ShapeError("linear_backward: grad dims " +
                     dims_to_string(grad_output.dims()));
  }
  ConvGrads<T> g{Tensor<T>(input.dims()), Tensor<T>(weight.dims()),
                 Tensor<T>({dout})};
  ConstMatrixMap<T> dy(grad_output.ptr(), n, dout);
  MatrixMap<T>(g.input.ptr(), n, din).noalias() =
      dy * ConstMatrixMap<T>(weight.ptr(), dout, din);
  MatrixMap<T>(g.weight.ptr(), dout, din).noalias() =
      dy.transpose() * ConstMatrixMap<T>(input.ptr(), n, din);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g.bias.ptr(), dout) =
      dy.colwise().sum();
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization over (N,H,W) per channel.
// ---------------------------------------------------------------------------

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;  // running = (1 - momentum) * running + momentum * batch
};

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  static BatchNormState identity(std::size_t channels) {
    return {Tensor<T>({channels}, T{0}), Tensor<T>({channels}, T{1})};
  }
};

template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;         // x_hat
  std::vector<double> inv_std;  // per channel
  Mode mode = Mode::kTrain;
};

template <typename T>
struct BatchNormResult {
  Tensor<T> output;
  BatchNormCache<T> cache;
};

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

/// Train mode normalizes with batch statistics and updates `state` (running
/// variance uses the unbiased estimate); eval mode uses the running stats.
template <typename T>
BatchNormResult<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma,
                              const Tensor<T>& beta, BatchNormState<T>& state,
                              Mode mode, const BatchNormOptions& opts = {}) {
  require_rank(input.dims(), 4, "batch_norm");
  const std::size_t n = input.dim(0), c = input.dim(1),
                    hw = input.dim(2) * input.dim(3);
  detail::require_bias(gamma.dims(), c, "batch_norm gamma");
  detail::require_bias(beta.dims(), c, "batch_norm beta");
  detail::require_bias(state.running_mean.dims(), c, "batch_norm running_mean");
  detail::require_bias(state.running_var.dims(), c, "batch_norm running_var");
  const std::size_t count = n * hw;
  if (mode == Mode::kTrain && count < 2) {
    throw ConfigError(
        "batch_norm: degenerate batch, train mode needs N*H*W >= 2 per "
        "channel");
  }

  BatchNormResult<T> r{Tensor<T>(input.dims()),
                       {Tensor<T>(input.dims()), std::vector<double>(c), mode}};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (mode == Mode::kTrain) {
      double sum = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const T* x = input.ptr() + (s * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) sum += x[i];
      }
      mean = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const T* x = input.ptr() + (s * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = x[i] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(count);
      const double unbiased = sq / static_cast<double>(count - 1);
      state.running_mean[ch] = static_cast<T>(
          (1.0 - opts.momentum) * state.running_mean[ch] + opts.momentum * mean);
      state.running_var[ch] = static_cast<T>(
          (1.0 - opts.momentum) * state.running_var[ch] +
          opts.momentum * unbiased);
    } else {
      mean = state.running_mean[ch];
      var = state.running_var[ch];
    }
    const double inv_std = 1.0 / std::sqrt(var + opts.epsilon);
    r.cache.inv_std[ch] = inv_std;
    const double g = gamma[ch], b = beta[ch];
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t base = (s * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double xhat = (input[base + i] - mean) * inv_std;
        r.cache.normalized[base + i] = static_cast<T>(xhat);
        r.output[base + i] = static_cast<T>(g * xhat + b);
      }
    }
  }
  return r;
}

template <typename T>
BatchNormGrads<T> batch_norm_backward(const BatchNormCache<T>& cache,
                                      const Tensor<T>& gamma,
                                      const Tensor<T>& grad_output) {
  const Tensor<T>& xhat = cache.normalized;
  xhat.require_same_dims(grad_output, "batch_norm_backward");
  const std::size_t n = xhat.dim(0), c = xhat.dim(1),
                    hw = xhat.dim(2) * xhat.dim(3);
  const double count = static_cast<double>(n * hw);
  BatchNormGrads<T> g{Tensor<T>(xhat.dims()), Tensor<T>({c}), Tensor<T>({c})};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t base = (s * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += grad_output[base + i];
        sum_dy_xhat += grad_output[base + i] * xhat[base + i];
      }
    }
    g.gamma[ch] = static_cast<T>(sum_dy_xhat);
    g.beta[ch] = static_cast<T>(sum_dy);
    const double scale = gamma[ch] * cache.inv_std[ch];
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t base = (s * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        double d = grad_output[base + i];
        if (cache.mode == Mode::kTrain) {
          d = d - sum_dy / count - xhat[base + i] * sum_dy_xhat / count;
        }
        g.input[base + i] = static_cast<T>(scale * d);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Elementwise activations.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(Tensor<T> x) {
  for (auto& v : x.data()) v = v > T{0} ? v : T{0};
  return x;
}

/// Subgradient at 0 is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, Tensor<T> grad_output) {
  input.require_same_dims(grad_output, "relu_backward");
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (!(input[i] > T{0})) grad_output[i] = T{0};
  }
  return grad_output;
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
Tensor<T> sigmoid(Tensor<T> x) {
  for (auto& v : x.data()) v = sigmoid_scalar(v);
  return x;
}

/// Takes the forward *output* s and uses ds/dx = s(1-s).
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output, Tensor<T> grad_output) {
  output.require_same_dims(grad_output, "sigmoid_backward");
  for (std::size_t i = 0; i < output.size(); ++i) {
    grad_output[i] *= output[i] * (T{1} - output[i]);
  }
  return grad_output;
}

/// Row-wise softmax of [N,M] logits with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require_rank(logits.dims(), 2, "softmax");
  const std::size_t n = logits.dim(0), m = logits.dim(1);
  Tensor<T> out(logits.dims());
  for (std::size_t r = 0; r < n; ++r) {
    const T* x = logits.ptr() + r * m;
    T* y = out.ptr() + r * m;
    const double mx = *std::max_element(x, x + m);
    double sum = 0.0;
    std::vector<double> e(m);
    for (std::size_t j = 0; j < m; ++j) {
      e[j] = std::exp(static_cast<double>(x[j]) - mx);
      sum += e[j];
    }
    for (std::size_t j = 0; j < m; ++j) y[j] = static_cast<T>(e[j] / sum);
  }
  return out;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& output, const Tensor<T>& grad_output) {
  output.require_same_dims(grad_output, "softmax_backward");
  const std::size_t n = output.dim(0), m = output.dim(1);
  Tensor<T> dx(output.dims());
  for (std::size_t r = 0; r < n; ++r) {
    double dot = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      dot += grad_output[r * m + j] * output[r * m + j];
    }
    for (std::size_t j = 0; j < m; ++j) {
      dx[r * m + j] =
          static_cast<T>(output[r * m + j] * (grad_output[r * m + j] - dot));
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Pooling, dropout, and tensor plumbing.
// ---------------------------------------------------------------------------

/// [N,C,H,W] -> [N,C], mean over spatial positions.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  require_rank(input.dims(), 4, "global_avg_pool");
  const std::size_t n = input.dim(0), c = input.dim(1),
                    hw = input.dim(2) * input.dim(3);
  Tensor<T> out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double sum = 0.0;
    const T* x = input.ptr() + i * hw;
    for (std::size_t j = 0; j < hw; ++j) sum += x[j];
    out[i] = static_cast<T>(sum / static_cast<double>(hw));
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Dims& input_dims,
                                   const Tensor<T>& grad_output) {
  const std::size_t n = input_dims[0], c = input_dims[1],
                    hw = input_dims[2] * input_dims[3];
  if (grad_output.dims() != Dims{n, c}) {
    throw ShapeError("global_avg_pool_backward: grad dims " +
                     dims_to_string(grad_output.dims()));
  }
  Tensor<T> dx(input_dims);
  const T scale = T{1} / static_cast<T>(hw);
  for (std::size_t i = 0; i < n * c; ++i) {
    std::fill(dx.ptr() + i * hw, dx.ptr() + (i + 1) * hw,
              grad_output[i] * scale);
  }
  return dx;
}

template <typename T>
struct DropoutResult {
  Tensor<T> output;
  Tensor<T> mask;  // 0 or 1/(1-p) per element; all ones in eval mode
};

/// Inverted dropout; eval mode (or p == 0) is the identity.
template <typename T>
DropoutResult<T> dropout(const Tensor<T>& input, double p, Mode mode,
                         std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout: probability must be in [0, 1), got " +
                      std::to_string(p));
  }
  DropoutResult<T> r{input, Tensor<T>(input.dims(), T{1})};
  if (mode == Mode::kEval || p == 0.0) return r;
  Rng rng(seed);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < input.size(); ++i) {
    r.mask[i] = rng.bernoulli(p) ? T{0} : keep_scale;
    r.output[i] = input[i] * r.mask[i];
  }
  return r;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& mask, Tensor<T> grad_output) {
  mask.require_same_dims(grad_output, "dropout_backward");
  for (std::size_t i = 0; i < mask.size(); ++i) grad_output[i] *= mask[i];
  return grad_output;
}

template <typename T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b) {
  a.require_same_dims(b, "multiply");
  Tensor<T> out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

/// Concatenates [N,Ci,H,W] tensors along channels.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Dims& d0 = parts.front().dims();
  require_rank(d0, 4, "concat_channels");
  std::size_t channels = 0;
  for (const auto& p : parts) {
    if (p.rank() != 4 || p.dim(0) != d0[0] || p.dim(2) != d0[2] ||
        p.dim(3) != d0[3]) {
      throw ShapeError("concat_channels: incompatible dims " +
                       dims_to_string(p.dims()));
    }
    channels += p.dim(1);
  }
  const std::size_t n = d0[0], hw = d0[2] * d0[3];
  Tensor<T> out({n, channels, d0[2], d0[3]});
  for (std::size_t s = 0; s < n; ++s) {
    T* dst = out.ptr() + s * channels * hw;
    for (const auto& p : parts) {
      const std::size_t len = p.dim(1) * hw;
      std::copy_n(p.ptr() + s * len, len, dst);
      dst += len;
    }
  }
  return out;
}

/// Inverse of concat_channels: channel block [begin, begin+count).
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& input, std::size_t begin,
                         std::size_t count) {
  require_rank(input.dims(), 4, "slice_channels");
  const std::size_t n = input.dim(0), c = input.dim(1),
                    hw = input.dim(2) * input.dim(3);
  if (begin + count > c) throw ShapeError("slice_channels: out of range");
  Tensor<T> out({n, count, input.dim(2), input.dim(3)});
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(input.ptr() + (s * c + begin) * hw, count * hw,
                out.ptr() + s * count * hw);
  }
  return out;
}

/// [N,C,H,W] -> [N*H*W, C] (channel-last rows).
template <typename T>
Tensor<T> to_channel_last(const Tensor<T>& input) {
  require_rank(input.dims(), 4, "to_channel_last");
  const std::size_t n = input.dim(0), c = input.dim(1),
                    hw = input.dim(2) * input.dim(3);
  Tensor<T> out({n * hw, c});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* x = input.ptr() + (s * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) out[(s * hw + i) * c + ch] = x[i];
    }
  }
  return out;
}

/// Inverse of to_channel_last for the given NCHW dims.
template <typename T>
Tensor<T> from_channel_last(const Tensor<T>& rows, const Dims& nchw) {
  const std::size_t n = nchw[0], c = nchw[1], hw = nchw[2] * nchw[3];
  if (rows.dims() != Dims{n * hw, c}) {
    throw ShapeError("from_channel_last: dims " + dims_to_string(rows.dims()) +
                     " vs " + dims_to_string(nchw));
  }
  Tensor<T> out(nchw);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      T* y = out.ptr() + (s * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) y[i] = rows[(s * hw + i) * c + ch];
    }
  }
  return out;
}

}  // namespace avfer
