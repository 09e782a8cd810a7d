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

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "reface/error.hpp"

namespace reface {

using Dims3 = std::array<std::int64_t, 3>;

inline std::int64_t voxel_count(const Dims3& d) { return d[0] * d[1] * d[2]; }

/// Dense 3D grid stored with axis 0 varying fastest (NIfTI order).
template <typename T>
struct Grid3 {
  Dims3 dims{0, 0, 0};
  std::vector<T> data;

  Grid3() = default;
  explicit Grid3(const Dims3& d, T fill = T{}) : dims(d), data(static_cast<std::size_t>(voxel_count(d)), fill) {}

  std::size_t index(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return static_cast<std::size_t>(i + dims[0] * (j + dims[1] * k));
  }
  T& operator()(std::int64_t i, std::int64_t j, std::int64_t k) { return data[index(i, j, k)]; }
  const T& operator()(std::int64_t i, std::int64_t j, std::int64_t k) const { return data[index(i, j, k)]; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Dims3& other) const { return dims == other; }
};

using FloatGrid = Grid3<float>;
using BinaryMask = Grid3<std::uint8_t>;

template <typename A, typename B>
void require_same_dims(const Grid3<A>& a, const Grid3<B>& b, const char* what) {
  if (a.dims != b.dims) fail(ErrorCode::ShapeMismatch, std::string(what) + ": grid dimensions differ");
}

}  // namespace reface
