/*
 * Copyright 2026 The reface Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "reface/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace reface {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Upper bound on im2col buffer elements per chunk.
constexpr std::int64_t kColumnBudget = std::int64_t{1} << 22;

using Shape3 = std::array<int, 3>;

std::int64_t volume_of(const Shape3& s) { return static_cast<std::int64_t>(s[0]) * s[1] * s[2]; }

std::int64_t chunk_columns(std::int64_t rows, std::int64_t n) {
  return std::clamp<std::int64_t>(kColumnBudget / std::max<std::int64_t>(rows, 1), 1, n);
}

// Visits, for one kernel offset (kz, ky, kx), every run of consecutive
// output columns n in [n0, n0 + nb) that share (oz, oy), passing the range
// of ox whose input x-coordinate is in bounds. fn(t_begin, ox_begin, count,
// in_offset_of_first, stride, valid) with t relative to n0.
template <typename Fn>
void for_each_run(const Shape3& big, const ConvGeometry& g, const Shape3& small, std::int64_t n0, std::int64_t nb,
                  int kz, int ky, int kx, Fn&& fn) {
  const std::int64_t hw = static_cast<std::int64_t>(small[1]) * small[2];
  std::int64_t n = n0;
  const std::int64_t end = n0 + nb;
  while (n < end) {
    const int oz = static_cast<int>(n / hw);
    const int oy = static_cast<int>((n % hw) / small[2]);
    const int ox_start = static_cast<int>(n % small[2]);
    const int ox_stop = static_cast<int>(std::min<std::int64_t>(small[2], ox_start + (end - n)));
    const int iz = oz * g.stride - g.padding + kz;
    const int iy = oy * g.stride - g.padding + ky;
    const std::int64_t t0 = n - n0;
    const bool row_ok = iz >= 0 && iz < big[0] && iy >= 0 && iy < big[1];
    // ix = ox * stride - pad + kx must lie in [0, big[2]).
    int lo = ox_start, hi = ox_stop;
    if (row_ok) {
      const int need_lo = g.padding - kx;  // ox * stride >= need_lo
      const int first = need_lo <= 0 ? 0 : (need_lo + g.stride - 1) / g.stride;
      const int need_hi = big[2] - 1 + g.padding - kx;  // ox * stride <= need_hi
      const int last = need_hi < 0 ? -1 : need_hi / g.stride;
      lo = std::max(ox_start, first);
      hi = std::min(ox_stop, last + 1);
      if (hi < lo) hi = lo;
    }
    const std::int64_t base = row_ok ? (static_cast<std::int64_t>(iz) * big[1] + iy) * big[2] : 0;
    fn(t0, ox_start, ox_stop, row_ok, lo, hi, base + static_cast<std::int64_t>(lo) * g.stride - g.padding + kx);
    n += ox_stop - ox_start;
  }
}

template <typename T>
void im2col(const T* src, int channels, const Shape3& big, const ConvGeometry& g, const Shape3& small, std::int64_t n0,
            std::int64_t nb, T* cols) {
  const int k = g.kernel;
  const std::int64_t plane = volume_of(big);
  for (int c = 0; c < channels; ++c) {
    const T* in = src + c * plane;
    for (int kz = 0; kz < k; ++kz)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          T* row = cols + ((static_cast<std::int64_t>(c) * k + kz) * k + ky) * k * nb + static_cast<std::int64_t>(kx) * nb;
          for_each_run(big, g, small, n0, nb, kz, ky, kx,
                       [&](std::int64_t t0, int ox0, int ox1, bool ok, int lo, int hi, std::int64_t first) {
                         T* out = row + t0;
                         if (!ok) {
                           std::fill(out, out + (ox1 - ox0), T{0});
                           return;
                         }
                         std::fill(out, out + (lo - ox0), T{0});
                         const T* p = in + first;
                         for (int ox = lo; ox < hi; ++ox, p += g.stride) out[ox - ox0] = *p;
                         std::fill(out + (hi - ox0), out + (ox1 - ox0), T{0});
                       });
        }
  }
}

template <typename T>
void col2im(const T* cols, int channels, const Shape3& big, const ConvGeometry& g, const Shape3& small, std::int64_t n0,
            std::int64_t nb, T* dst) {
  const int k = g.kernel;
  const std::int64_t plane = volume_of(big);
  for (int c = 0; c < channels; ++c) {
    T* out = dst + c * plane;
    for (int kz = 0; kz < k; ++kz)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const T* row =
              cols + ((static_cast<std::int64_t>(c) * k + kz) * k + ky) * k * nb + static_cast<std::int64_t>(kx) * nb;
          for_each_run(big, g, small, n0, nb, kz, ky, kx,
                       [&](std::int64_t t0, int ox0, int, bool ok, int lo, int hi, std::int64_t first) {
                         if (!ok) return;
                         const T* in = row + t0;
                         T* p = out + first;
                         for (int ox = lo; ox < hi; ++ox, p += g.stride) *p += in[ox - ox0];
                       });
        }
  }
}

void check_geometry(const ConvGeometry& g) {
  if (g.kernel < 1 || g.stride < 1 || g.padding < 0) fail(ErrorCode::InvalidArgument, "invalid convolution geometry");
}

void check_weight(std::size_t got, std::int64_t want, const char* what) {
  if (static_cast<std::int64_t>(got) != want) fail(ErrorCode::ShapeMismatch, std::string(what) + ": weight size mismatch");
}

}  // namespace

int conv_output_size(int in, const ConvGeometry& g) { return (in + 2 * g.padding - g.kernel) / g.stride + 1; }

int conv_transpose_output_size(int in, const ConvGeometry& g) { return (in - 1) * g.stride - 2 * g.padding + g.kernel; }

template <typename T>
Tensor4<T> conv3d(const Tensor4<T>& x, std::span<const T> weight, std::span<const T> bias, int out_channels,
                  const ConvGeometry& g) {
  check_geometry(g);
  const int cin = x.channels();
  const int k3 = g.kernel * g.kernel * g.kernel;
  check_weight(weight.size(), static_cast<std::int64_t>(out_channels) * cin * k3, "conv3d");
  if (!bias.empty() && static_cast<int>(bias.size()) != out_channels) fail(ErrorCode::ShapeMismatch, "conv3d: bias size");
  const Shape3 big = x.spatial_shape();
  const Shape3 small{conv_output_size(big[0], g), conv_output_size(big[1], g), conv_output_size(big[2], g)};
  if (small[0] < 1 || small[1] < 1 || small[2] < 1) fail(ErrorCode::ShapeMismatch, "conv3d: input smaller than kernel");

  Tensor4<T> y({out_channels, small[0], small[1], small[2]});
  const std::int64_t rows = static_cast<std::int64_t>(cin) * k3;
  const std::int64_t n = volume_of(small);
  const std::int64_t chunk = chunk_columns(rows, n);
  AlignedVector<T> cols(static_cast<std::size_t>(rows * chunk));
  Eigen::Map<const RowMat<T>> w(weight.data(), out_channels, rows);
  Eigen::Map<RowMat<T>> out(y.data.data(), out_channels, n);
  for (std::int64_t n0 = 0; n0 < n; n0 += chunk) {
    const std::int64_t nb = std::min(chunk, n - n0);
    im2col(x.data.data(), cin, big, g, small, n0, nb, cols.data());
    Eigen::Map<const RowMat<T>> c(cols.data(), rows, nb);
    out.middleCols(n0, nb).noalias() = w * c;
  }
  if (!bias.empty()) {
    for (int co = 0; co < out_channels; ++co) out.row(co).array() += bias[co];
  }
  return y;
}

template <typename T>
Tensor4<T> conv3d_backward(const Tensor4<T>& x, std::span<const T> weight, int out_channels, const ConvGeometry& g,
                           const Tensor4<T>& grad_out, std::span<T> grad_weight, std::span<T> grad_bias) {
  check_geometry(g);
  const int cin = x.channels();
  const int k3 = g.kernel * g.kernel * g.kernel;
  const std::int64_t rows = static_cast<std::int64_t>(cin) * k3;
  check_weight(weight.size(), out_channels * rows, "conv3d_backward");
  check_weight(grad_weight.size(), out_channels * rows, "conv3d_backward");
  const Shape3 big = x.spatial_shape();
  const Shape3 small = grad_out.spatial_shape();
  if (grad_out.channels() != out_channels || small[0] != conv_output_size(big[0], g) ||
      small[1] != conv_output_size(big[1], g) || small[2] != conv_output_size(big[2], g)) {
    fail(ErrorCode::ShapeMismatch, "conv3d_backward: gradient shape");
  }
  Tensor4<T> dx(x.shape);
  const std::int64_t n = volume_of(small);
  const std::int64_t chunk = chunk_columns(rows, n);
  AlignedVector<T> cols(static_cast<std::size_t>(rows * chunk));
  Eigen::Map<const RowMat<T>> w(weight.data(), out_channels, rows);
  Eigen::Map<RowMat<T>> dw(grad_weight.data(), out_channels, rows);
  Eigen::Map<const RowMat<T>> dy(grad_out.data.data(), out_channels, n);
  for (std::int64_t n0 = 0; n0 < n; n0 += chunk) {
    const std::int64_t nb = std::min(chunk, n - n0);
    im2col(x.data.data(), cin, big, g, small, n0, nb, cols.data());
    Eigen::Map<RowMat<T>> c(cols.data(), rows, nb);
    dw.noalias() += dy.middleCols(n0, nb) * c.transpose();
    c.noalias() = w.transpose() * dy.middleCols(n0, nb);
    col2im(cols.data(), cin, big, g, small, n0, nb, dx.data.data());
  }
  if (!grad_bias.empty()) {
    for (int co = 0; co < out_channels; ++co) grad_bias[co] += dy.row(co).sum();
  }
  return dx;
}

template <typename T>
Tensor4<T> conv_transpose3d(const Tensor4<T>& x, std::span<const T> weight, std::span<const T> bias,
                            int out_channels, const ConvGeometry& g) {
  check_geometry(g);
  const int cin = x.channels();
  const int k3 = g.kernel * g.kernel * g.kernel;
  const std::int64_t rows = static_cast<std::int64_t>(out_channels) * k3;
  check_weight(weight.size(), cin * rows, "conv_transpose3d");
  if (!bias.empty() && static_cast<int>(bias.size()) != out_channels) {
    fail(ErrorCode::ShapeMismatch, "conv_transpose3d: bias size");
  }
  const Shape3 small = x.spatial_shape();
  const Shape3 big{conv_transpose_output_size(small[0], g), conv_transpose_output_size(small[1], g),
                   conv_transpose_output_size(small[2], g)};
  if (big[0] < 1 || big[1] < 1 || big[2] < 1) fail(ErrorCode::ShapeMismatch, "conv_transpose3d: empty output");
  Tensor4<T> y({out_channels, big[0], big[1], big[2]});
  const std::int64_t n = volume_of(small);
  const std::int64_t chunk = chunk_columns(rows, n);
  AlignedVector<T> cols(static_cast<std::size_t>(rows * chunk));
  Eigen::Map<const RowMat<T>> w(weight.data(), cin, rows);
  Eigen::Map<const RowMat<T>> in(x.data.data(), cin, n);
  for (std::int64_t n0 = 0; n0 < n; n0 += chunk) {
    const std::int64_t nb = std::min(chunk, n - n0);
    Eigen::Map<RowMat<T>> c(cols.data(), rows, nb);
    c.noalias() = w.transpose() * in.middleCols(n0, nb);
    col2im(cols.data(), out_channels, big, g, small, n0, nb, y.data.data());
  }
  if (!bias.empty()) {
    for (int co = 0; co < out_channels; ++co) {
      T* p = y.channel(co);
      std::for_each(p, p + y.spatial_size(), [&](T& v) { v += bias[co]; });
    }
  }
  return y;
}

template <typename T>
Tensor4<T> conv_transpose3d_backward(const Tensor4<T>& x, std::span<const T> weight, int out_channels,
                                     const ConvGeometry& g, const Tensor4<T>& grad_out, std::span<T> grad_weight,
                                     std::span<T> grad_bias) {
  check_geometry(g);
  const int cin = x.channels();
  const int k3 = g.kernel * g.kernel * g.kernel;
  const std::int64_t rows = static_cast<std::int64_t>(out_channels) * k3;
  check_weight(weight.size(), cin * rows, "conv_transpose3d_backward");
  check_weight(grad_weight.size(), cin * rows, "conv_transpose3d_backward");
  const Shape3 small = x.spatial_shape();
  const Shape3 big = grad_out.spatial_shape();
  if (grad_out.channels() != out_channels || big[0] != conv_transpose_output_size(small[0], g) ||
      big[1] != conv_transpose_output_size(small[1], g) || big[2] != conv_transpose_output_size(small[2], g)) {
    fail(ErrorCode::ShapeMismatch, "conv_transpose3d_backward: gradient shape");
  }
  Tensor4<T> dx(x.shape);
  const std::int64_t n = volume_of(small);
  const std::int64_t chunk = chunk_columns(rows, n);
  AlignedVector<T> cols(static_cast<std::size_t>(rows * chunk));
  Eigen::Map<const RowMat<T>> w(weight.data(), cin, rows);
  Eigen::Map<RowMat<T>> dw(grad_weight.data(), cin, rows);
  Eigen::Map<const RowMat<T>> in(x.data.data(), cin, n);
  Eigen::Map<RowMat<T>> din(dx.data.data(), cin, n);
  for (std::int64_t n0 = 0; n0 < n; n0 += chunk) {
    const std::int64_t nb = std::min(chunk, n - n0);
    im2col(grad_out.data.data(), out_channels, big, g, small, n0, nb, cols.data());
    Eigen::Map<const RowMat<T>> c(cols.data(), rows, nb);
    din.middleCols(n0, nb).noalias() = w * c;
    dw.noalias() += in.middleCols(n0, nb) * c.transpose();
  }
  if (!grad_bias.empty()) {
    for (int co = 0; co < out_channels; ++co) {
      const T* p = grad_out.channel(co);
      T acc{0};
      for (std::int64_t i = 0; i < grad_out.spatial_size(); ++i) acc += p[i];
      grad_bias[co] += acc;
    }
  }
  return dx;
}

template <typename T>
Tensor4<T> instance_norm(const Tensor4<T>& x, std::vector<T>* inv_std) {
  Tensor4<T> y(x.shape);
  const std::int64_t n = x.spatial_size();
  if (inv_std) inv_std->assign(static_cast<std::size_t>(x.channels()), T{0});
  for (int c = 0; c < x.channels(); ++c) {
    const T* p = x.channel(c);
    double mean = 0.0;
    for (std::int64_t i = 0; i < n; ++i) mean += p[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t i = 0; i < n; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + kInstanceNormEps);
    T* q = y.channel(c);
    for (std::int64_t i = 0; i < n; ++i) q[i] = static_cast<T>((p[i] - mean) * is);
    if (inv_std) (*inv_std)[static_cast<std::size_t>(c)] = static_cast<T>(is);
  }
  return y;
}

template <typename T>
Tensor4<T> instance_norm_backward(const Tensor4<T>& y, const std::vector<T>& inv_std, const Tensor4<T>& grad_out) {
  require_same_shape(y, grad_out, "instance_norm_backward");
  Tensor4<T> dx(y.shape);
  const std::int64_t n = y.spatial_size();
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int c = 0; c < y.channels(); ++c) {
    const T* yp = y.channel(c);
    const T* g = grad_out.channel(c);
    double sum_g = 0.0, sum_gy = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      sum_g += g[i];
      sum_gy += static_cast<double>(g[i]) * yp[i];
    }
    const double is = inv_std[static_cast<std::size_t>(c)];
    T* d = dx.channel(c);
    for (std::int64_t i = 0; i < n; ++i) d[i] = static_cast<T>(is * (g[i] - inv_n * sum_g - yp[i] * inv_n * sum_gy));
  }
  return dx;
}

template <typename T>
Tensor4<T> leaky_relu(Tensor4<T> x, double slope) {
  const T s = static_cast<T>(slope);
  for (T& v : x.data) v = v > 0 ? v : v * s;
  return x;
}

template <typename T>
Tensor4<T> relu(Tensor4<T> x) {
  for (T& v : x.data) v = v > 0 ? v : T{0};
  return x;
}

template <typename T>
Tensor4<T> tanh_act(Tensor4<T> x) {
  for (T& v : x.data) v = std::tanh(v);
  return x;
}

template <typename T>
Tensor4<T> sigmoid(Tensor4<T> x) {
  for (T& v : x.data) v = v >= 0 ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
  return x;
}

template <typename T>
Tensor4<T> leaky_relu_backward(const Tensor4<T>& y, Tensor4<T> grad, double slope) {
  require_same_shape(y, grad, "leaky_relu_backward");
  const T s = static_cast<T>(slope);
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(y.data[i] > 0)) grad.data[i] *= s;
  return grad;
}

template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& y, Tensor4<T> grad) {
  require_same_shape(y, grad, "relu_backward");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(y.data[i] > 0)) grad.data[i] = T{0};
  return grad;
}

template <typename T>
Tensor4<T> tanh_backward(const Tensor4<T>& y, Tensor4<T> grad) {
  require_same_shape(y, grad, "tanh_backward");
  for (std::size_t i = 0; i < grad.size(); ++i) grad.data[i] *= T{1} - y.data[i] * y.data[i];
  return grad;
}

template <typename T>
Tensor4<T> sigmoid_backward(const Tensor4<T>& y, Tensor4<T> grad) {
  require_same_shape(y, grad, "sigmoid_backward");
  for (std::size_t i = 0; i < grad.size(); ++i) grad.data[i] *= y.data[i] * (T{1} - y.data[i]);
  return grad;
}

template <typename T>
Tensor4<T> dropout(Tensor4<T> x, double p, Rng& rng, std::vector<T>* scale) {
  if (!(p >= 0.0 && p < 1.0)) fail(ErrorCode::InvalidArgument, "dropout probability must lie in [0, 1)");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  if (scale) scale->resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T s = rng.uniform() < p ? T{0} : keep_scale;
    x.data[i] *= s;
    if (scale) (*scale)[i] = s;
  }
  return x;
}

template <typename T>
Tensor4<T> dropout_backward(const std::vector<T>& scale, Tensor4<T> grad) {
  if (scale.size() != grad.size()) fail(ErrorCode::ShapeMismatch, "dropout_backward: mask size");
  for (std::size_t i = 0; i < grad.size(); ++i) grad.data[i] *= scale[i];
  return grad;
}

#define REFACE_INSTANTIATE_LAYERS(T)                                                                               \
  template Tensor4<T> conv3d(const Tensor4<T>&, std::span<const T>, std::span<const T>, int, const ConvGeometry&); \
  template Tensor4<T> conv3d_backward(const Tensor4<T>&, std::span<const T>, int, const ConvGeometry&,             \
                                      const Tensor4<T>&, std::span<T>, std::span<T>);                              \
  template Tensor4<T> conv_transpose3d(const Tensor4<T>&, std::span<const T>, std::span<const T>, int,             \
                                       const ConvGeometry&);                                                       \
  template Tensor4<T> conv_transpose3d_backward(const Tensor4<T>&, std::span<const T>, int, const ConvGeometry&,   \
                                                const Tensor4<T>&, std::span<T>, std::span<T>);                    \
  template Tensor4<T> instance_norm(const Tensor4<T>&, std::vector<T>*);                                           \
  template Tensor4<T> instance_norm_backward(const Tensor4<T>&, const std::vector<T>&, const Tensor4<T>&);         \
  template Tensor4<T> leaky_relu(Tensor4<T>, double);                                                              \
  template Tensor4<T> relu(Tensor4<T>);                                                                            \
  template Tensor4<T> tanh_act(Tensor4<T>);                                                                        \
  template Tensor4<T> sigmoid(Tensor4<T>);                                                                         \
  template Tensor4<T> leaky_relu_backward(const Tensor4<T>&, Tensor4<T>, double);                                  \
  template Tensor4<T> relu_backward(const Tensor4<T>&, Tensor4<T>);                                                \
  template Tensor4<T> tanh_backward(const Tensor4<T>&, Tensor4<T>);                                                \
  template Tensor4<T> sigmoid_backward(const Tensor4<T>&, Tensor4<T>);                                             \
  template Tensor4<T> dropout(Tensor4<T>, double, Rng&, std::vector<T>*);                                          \
  template Tensor4<T> dropout_backward(const std::vector<T>&, Tensor4<T>);

REFACE_INSTANTIATE_LAYERS(float)
REFACE_INSTANTIATE_LAYERS(double)

#undef REFACE_INSTANTIATE_LAYERS

}  // namespace reface
