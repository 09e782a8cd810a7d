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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "reface/rng.hpp"
#include "reface/tensor.hpp"

namespace reface {

struct ConvGeometry {
  int kernel = 4;
  int stride = 2;
  int padding = 1;
};

/// Spatial size produced by a strided cross-correlation:
/// floor((in + 2 * pad - k) / stride) + 1.
int conv_output_size(int in, const ConvGeometry& g);
/// Spatial size produced by the matching transposed convolution.
int conv_transpose_output_size(int in, const ConvGeometry& g);

// Convolution weights are (Cout, Cin, k, k, k); transposed-convolution
// weights are (Cin, Cout, k, k, k). `bias` may be empty.

template <typename T>
Tensor4<T> conv3d(const Tensor4<T>& x, std::span<const T> weight, std::span<const T> bias, int out_channels,
                  const ConvGeometry& g);

/// Accumulates into `grad_weight`/`grad_bias` (bias grad skipped when empty)
/// and returns the gradient with respect to `x`.
template <typename T>
Tensor4<T> conv3d_backward(const Tensor4<T>& x, std::span<const T> weight, int out_channels, const ConvGeometry& g,
                           const Tensor4<T>& grad_out, std::span<T> grad_weight, std::span<T> grad_bias);

template <typename T>
Tensor4<T> conv_transpose3d(const Tensor4<T>& x, std::span<const T> weight, std::span<const T> bias,
                            int out_channels, const ConvGeometry& g);

template <typename T>
Tensor4<T> conv_transpose3d_backward(const Tensor4<T>& x, std::span<const T> weight, int out_channels,
                                     const ConvGeometry& g, const Tensor4<T>& grad_out, std::span<T> grad_weight,
                                     std::span<T> grad_bias);

inline constexpr double kInstanceNormEps = 1e-5;

/// Per-channel normalisation to zero mean and unit (biased) variance.
/// `inv_std` receives 1/sqrt(var + eps) per channel when non-null.
template <typename T>
Tensor4<T> instance_norm(const Tensor4<T>& x, std::vector<T>* inv_std = nullptr);

/// Gradient through instance_norm given its output `y` and saved `inv_std`.
template <typename T>
Tensor4<T> instance_norm_backward(const Tensor4<T>& y, const std::vector<T>& inv_std, const Tensor4<T>& grad_out);

inline constexpr double kLeakySlope = 0.2;

template <typename T>
Tensor4<T> leaky_relu(Tensor4<T> x, double slope = kLeakySlope);
template <typename T>
Tensor4<T> relu(Tensor4<T> x);
template <typename T>
Tensor4<T> tanh_act(Tensor4<T> x);
template <typename T>
Tensor4<T> sigmoid(Tensor4<T> x);

// Activation backward passes take the forward output, which carries the
// sign information needed for the piecewise-linear units.
template <typename T>
Tensor4<T> leaky_relu_backward(const Tensor4<T>& y, Tensor4<T> grad, double slope = kLeakySlope);
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& y, Tensor4<T> grad);
template <typename T>
Tensor4<T> tanh_backward(const Tensor4<T>& y, Tensor4<T> grad);
template <typename T>
Tensor4<T> sigmoid_backward(const Tensor4<T>& y, Tensor4<T> grad);

/// Inverted dropout: zeroes each element with probability p and scales the
/// survivors by 1/(1-p). `scale` receives the per-element multiplier.
template <typename T>
Tensor4<T> dropout(Tensor4<T> x, double p, Rng& rng, std::vector<T>* scale = nullptr);
template <typename T>
Tensor4<T> dropout_backward(const std::vector<T>& scale, Tensor4<T> grad);

}  // namespace reface
