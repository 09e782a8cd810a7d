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

#include "reface/optimizer.hpp"

#include <cmath>

namespace reface {

template <typename T>
void require_finite_gradients(const ParameterSet<T>& params) {
  for (const auto& [name, param] : params.entries()) {
    for (T g : param.grad) {
      if (!std::isfinite(static_cast<double>(g))) fail(ErrorCode::NumericalError, "non-finite gradient in " + name);
    }
  }
}

template <typename T>
void Adam<T>::step(ParameterSet<T>& params, double lr) {
  require_finite_gradients(params);
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, param] : params.entries()) {
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() != param.value.size()) {
      m.assign(param.value.size(), T{0});
      v.assign(param.value.size(), T{0});
    }
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const double g = param.grad[i];
      const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      param.value[i] = static_cast<T>(param.value[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + cfg_.eps));
    }
  }
}

template <typename T>
void sgd_step(ParameterSet<T>& params, double lr) {
  require_finite_gradients(params);
  for (auto& [name, param] : params.entries()) {
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      param.value[i] = static_cast<T>(param.value[i] - lr * param.grad[i]);
    }
  }
}

template class Adam<float>;
template class Adam<double>;
template void sgd_step<float>(ParameterSet<float>&, double);
template void sgd_step<double>(ParameterSet<double>&, double);
template void require_finite_gradients<float>(const ParameterSet<float>&);
template void require_finite_gradients<double>(const ParameterSet<double>&);

}  // namespace reface
