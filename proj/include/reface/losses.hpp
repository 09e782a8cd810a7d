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

#include "reface/tensor.hpp"

namespace reface {

/// Probabilities are clamped to [eps, 1 - eps] before taking logs.
inline constexpr double kProbabilityEps = 1e-7;

/// Mean over voxels of |x - g|^1.5.
template <typename T>
double l15_term(const Tensor4<T>& x, const Tensor4<T>& g);

/// Gradient of l15_term with respect to g.
template <typename T>
Tensor4<T> l15_grad(const Tensor4<T>& x, const Tensor4<T>& g);

struct AdversarialLosses {
  double loss_D = 0.0;
  double loss_G = 0.0;
  double adversarial_G = 0.0;  // -mean log d_fake
  double l15 = 0.0;
};

/// loss_D = -mean log d_real - mean log(1 - d_fake);
/// loss_G = -mean log d_fake + lambda * l15_term(x, g).
template <typename T>
AdversarialLosses adversarial_losses(const Tensor4<T>& d_real, const Tensor4<T>& d_fake, const Tensor4<T>& x,
                                     const Tensor4<T>& g, double lambda);

/// Gradient w.r.t. d of -mean log d (target_real) or -mean log(1 - d).
template <typename T>
Tensor4<T> bce_grad(const Tensor4<T>& d, bool target_real);

}  // namespace reface
