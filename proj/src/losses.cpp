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

#include "reface/losses.hpp"

#include <algorithm>
#include <cmath>

namespace reface {

namespace {

template <typename T>
void require_finite(const Tensor4<T>& t, const char* what) {
  for (T v : t.data) {
    if (!std::isfinite(static_cast<double>(v))) fail(ErrorCode::NumericalError, std::string(what) + " is not finite");
  }
}

double clamp_probability(double d) { return std::clamp(d, kProbabilityEps, 1.0 - kProbabilityEps); }

template <typename T>
double mean_neg_log(const Tensor4<T>& d, bool target_real) {
  double s = 0.0;
  for (T v : d.data) {
    const double p = clamp_probability(static_cast<double>(v));
    s -= std::log(target_real ? p : 1.0 - p);
  }
  return s / static_cast<double>(d.size());
}

}  // namespace

template <typename T>
double l15_term(const Tensor4<T>& x, const Tensor4<T>& g) {
  require_same_shape(x, g, "l15_term");
  if (x.size() == 0) fail(ErrorCode::EmptyInput, "l15_term: empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = std::abs(static_cast<double>(x.data[i]) - static_cast<double>(g.data[i]));
    s += r * std::sqrt(r);
  }
  return s / static_cast<double>(x.size());
}

template <typename T>
Tensor4<T> l15_grad(const Tensor4<T>& x, const Tensor4<T>& g) {
  require_same_shape(x, g, "l15_grad");
  Tensor4<T> out(g.shape);
  const double scale = 1.5 / static_cast<double>(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = static_cast<double>(g.data[i]) - static_cast<double>(x.data[i]);
    out.data[i] = static_cast<T>(scale * (r < 0 ? -1.0 : 1.0) * std::sqrt(std::abs(r)));
  }
  return out;
}

template <typename T>
AdversarialLosses adversarial_losses(const Tensor4<T>& d_real, const Tensor4<T>& d_fake, const Tensor4<T>& x,
                                     const Tensor4<T>& g, double lambda) {
  require_same_shape(d_real, d_fake, "adversarial_losses");
  if (d_real.size() == 0) fail(ErrorCode::EmptyInput, "adversarial_losses: empty patch grid");
  require_finite(d_real, "d_real");
  require_finite(d_fake, "d_fake");
  require_finite(x, "target");
  require_finite(g, "generated");
  AdversarialLosses out;
  out.l15 = l15_term(x, g);
  out.loss_D = mean_neg_log(d_real, true) + mean_neg_log(d_fake, false);
  out.adversarial_G = mean_neg_log(d_fake, true);
  out.loss_G = out.adversarial_G + lambda * out.l15;
  return out;
}

template <typename T>
Tensor4<T> bce_grad(const Tensor4<T>& d, bool target_real) {
  Tensor4<T> out(d.shape);
  const double n = static_cast<double>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double p = clamp_probability(static_cast<double>(d.data[i]));
    out.data[i] = static_cast<T>(target_real ? -1.0 / (n * p) : 1.0 / (n * (1.0 - p)));
  }
  return out;
}

#define REFACE_INSTANTIATE_LOSSES(T)                                                                  \
  template double l15_term<T>(const Tensor4<T>&, const Tensor4<T>&);                                 \
  template Tensor4<T> l15_grad<T>(const Tensor4<T>&, const Tensor4<T>&);                             \
  template AdversarialLosses adversarial_losses<T>(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&, \
                                                   const Tensor4<T>&, double);                        \
  template Tensor4<T> bce_grad<T>(const Tensor4<T>&, bool);

REFACE_INSTANTIATE_LOSSES(float)
REFACE_INSTANTIATE_LOSSES(double)

}  // namespace reface
