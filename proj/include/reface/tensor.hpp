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
#include <new>
#include <vector>

#include "reface/error.hpp"

namespace reface {

/// Cache-line aligned allocator. Vectorized reductions peel by address, so a
/// fixed base alignment keeps summation order identical between allocations.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense (channels, depth, height, width) activation tensor, width fastest.
template <typename T>
struct Tensor4 {
  std::array<int, 4> shape{0, 0, 0, 0};
  AlignedVector<T> data;

  Tensor4() = default;
  explicit Tensor4(const std::array<int, 4>& s, T fill = T{0})
      : shape(s), data(static_cast<std::size_t>(s[0]) * s[1] * s[2] * s[3], fill) {}

  int channels() const { return shape[0]; }
  int depth() const { return shape[1]; }
  int height() const { return shape[2]; }
  int width() const { return shape[3]; }
  std::array<int, 3> spatial_shape() const { return {shape[1], shape[2], shape[3]}; }
  std::int64_t spatial_size() const { return static_cast<std::int64_t>(shape[1]) * shape[2] * shape[3]; }
  std::size_t size() const { return data.size(); }

  T* channel(int c) { return data.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(spatial_size()); }
  const T* channel(int c) const {
    return data.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(spatial_size());
  }
  T& at(int c, int z, int y, int x) {
    return data[((static_cast<std::size_t>(c) * shape[1] + z) * shape[2] + y) * shape[3] + x];
  }
  const T& at(int c, int z, int y, int x) const {
    return data[((static_cast<std::size_t>(c) * shape[1] + z) * shape[2] + y) * shape[3] + x];
  }
};

template <typename T>
void require_same_shape(const Tensor4<T>& a, const Tensor4<T>& b, const char* what) {
  if (a.shape != b.shape) fail(ErrorCode::ShapeMismatch, std::string(what) + ": tensor shapes differ");
}

/// Stacks tensors with equal spatial shape along the channel axis.
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.spatial_shape() != b.spatial_shape()) fail(ErrorCode::ShapeMismatch, "concat: spatial shapes differ");
  Tensor4<T> out({a.shape[0] + b.shape[0], a.shape[1], a.shape[2], a.shape[3]});
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

/// Channels [first, first + count) of `t`.
template <typename T>
Tensor4<T> slice_channels(const Tensor4<T>& t, int first, int count) {
  Tensor4<T> out({count, t.shape[1], t.shape[2], t.shape[3]});
  const auto begin = t.data.begin() + static_cast<std::ptrdiff_t>(first) * t.spatial_size();
  std::copy(begin, begin + static_cast<std::ptrdiff_t>(out.size()), out.data.begin());
  return out;
}

template <typename To, typename From>
Tensor4<To> tensor_cast(const Tensor4<From>& t) {
  Tensor4<To> out;
  out.shape = t.shape;
  out.data.assign(t.data.begin(), t.data.end());
  return out;
}

}  // namespace reface
