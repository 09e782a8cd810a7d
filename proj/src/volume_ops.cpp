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

#include "reface/volume_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace reface {

NiftiImage winsorize(const NiftiImage& img, double cap) {
  if (!(cap > 0)) fail(ErrorCode::InvalidArgument, "winsorize cap must be positive");
  NiftiImage out = img;
  const float c = static_cast<float>(cap);
  for (float& v : out.data.data) v = std::min(v, c);
  return out;
}

double percentile_linear(std::vector<double> values, double percentile) {
  if (values.empty()) fail(ErrorCode::EmptyInput, "percentile of an empty list");
  std::sort(values.begin(), values.end());
  const double pos = percentile / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double compute_cap(std::span<const double> per_scan_maxima, double percentile) {
  if (per_scan_maxima.empty()) fail(ErrorCode::EmptyInput, "no scan maxima given");
  if (!(percentile > 0 && percentile < 100)) fail(ErrorCode::InvalidArgument, "percentile must lie in (0, 100)");
  return percentile_linear({per_scan_maxima.begin(), per_scan_maxima.end()}, percentile);
}

ScaleCoeffs fit_scale(const NiftiImage& img) {
  if (img.data.data.empty()) fail(ErrorCode::EmptyInput, "empty volume");
  const auto [lo, hi] = std::minmax_element(img.data.data.begin(), img.data.data.end());
  const double mn = *lo, mx = *hi;
  if (!(mx > mn)) fail(ErrorCode::DegenerateRange, "constant volume has no intensity range");
  ScaleCoeffs c;
  c.a = 2.0 / (mx - mn);
  c.b = -1.0 - c.a * mn;
  c.source_min = mn;
  c.source_max = mx;
  return c;
}

namespace {

NiftiImage mapped(const NiftiImage& img, auto fn) {
  NiftiImage out = img;
  out.datatype_code = nifti_type::kFloat32;
  out.scl_slope = 1.0;
  out.scl_inter = 0.0;
  for (float& v : out.data.data) v = static_cast<float>(fn(static_cast<double>(v)));
  return out;
}

}  // namespace

NiftiImage apply_scale(const NiftiImage& img, const ScaleCoeffs& coeffs) {
  return mapped(img, [&](double v) { return coeffs.apply(v); });
}

NiftiImage invert_scale(const NiftiImage& img, const ScaleCoeffs& coeffs) {
  return mapped(img, [&](double v) { return coeffs.invert(v); });
}

TilePlan plan_tiles(const Dims3& dims, const Dims3& tile) {
  TilePlan plan;
  plan.tile_shape = tile;
  plan.volume_dims = dims;
  std::array<std::vector<std::int64_t>, 3> axis_origins;
  for (int a = 0; a < 3; ++a) {
    if (tile[a] < 1 || dims[a] < 1) fail(ErrorCode::InvalidArgument, "tile and volume dims must be positive");
    if (dims[a] > 2 * tile[a]) {
      fail(ErrorCode::VolumeTooLarge, "axis " + std::to_string(a) + " has " + std::to_string(dims[a]) +
                                          " voxels; at most " + std::to_string(2 * tile[a]) + " fit two tiles");
    }
    plan.padded_dims[a] = std::max(dims[a], tile[a]);
    plan.pad_before[a] = (plan.padded_dims[a] - dims[a]) / 2;
    axis_origins[a].push_back(0);
    if (plan.padded_dims[a] > tile[a]) axis_origins[a].push_back(plan.padded_dims[a] - tile[a]);
  }
  for (std::int64_t z : axis_origins[2])
    for (std::int64_t y : axis_origins[1])
      for (std::int64_t x : axis_origins[0]) plan.origins.push_back({x, y, z});
  return plan;
}

Grid3<int> coverage_count(const TilePlan& plan) {
  Grid3<int> count(plan.padded_dims, 0);
  for (const Dims3& o : plan.origins)
    for (std::int64_t k = 0; k < plan.tile_shape[2]; ++k)
      for (std::int64_t j = 0; j < plan.tile_shape[1]; ++j)
        for (std::int64_t i = 0; i < plan.tile_shape[0]; ++i) ++count(o[0] + i, o[1] + j, o[2] + k);
  return count;
}

std::vector<FloatGrid> split_tiles(const FloatGrid& volume, const TilePlan& plan, float pad_value) {
  if (volume.dims != plan.volume_dims) fail(ErrorCode::ShapeMismatch, "volume does not match tile plan");
  std::vector<FloatGrid> tiles;
  tiles.reserve(plan.origins.size());
  const Dims3& t = plan.tile_shape;
  for (const Dims3& o : plan.origins) {
    FloatGrid tile(t, pad_value);
    for (std::int64_t k = 0; k < t[2]; ++k) {
      const std::int64_t sk = o[2] + k - plan.pad_before[2];
      if (sk < 0 || sk >= volume.dims[2]) continue;
      for (std::int64_t j = 0; j < t[1]; ++j) {
        const std::int64_t sj = o[1] + j - plan.pad_before[1];
        if (sj < 0 || sj >= volume.dims[1]) continue;
        for (std::int64_t i = 0; i < t[0]; ++i) {
          const std::int64_t si = o[0] + i - plan.pad_before[0];
          if (si < 0 || si >= volume.dims[0]) continue;
          tile(i, j, k) = volume(si, sj, sk);
        }
      }
    }
    tiles.push_back(std::move(tile));
  }
  return tiles;
}

FloatGrid recombine(const std::vector<FloatGrid>& tiles, const TilePlan& plan) {
  if (tiles.size() != plan.origins.size()) fail(ErrorCode::ShapeMismatch, "tile count does not match plan");
  for (const FloatGrid& t : tiles) {
    if (t.dims != plan.tile_shape) fail(ErrorCode::ShapeMismatch, "tile shape does not match plan");
  }
  // Sums of at most eight float values are exact in double precision, so
  // averaging identical tiles reproduces the original bits.
  Grid3<double> sum(plan.padded_dims, 0.0);
  Grid3<int> count(plan.padded_dims, 0);
  const Dims3& t = plan.tile_shape;
  for (std::size_t n = 0; n < tiles.size(); ++n) {
    const Dims3& o = plan.origins[n];
    for (std::int64_t k = 0; k < t[2]; ++k)
      for (std::int64_t j = 0; j < t[1]; ++j)
        for (std::int64_t i = 0; i < t[0]; ++i) {
          sum(o[0] + i, o[1] + j, o[2] + k) += tiles[n](i, j, k);
          ++count(o[0] + i, o[1] + j, o[2] + k);
        }
  }
  FloatGrid out(plan.volume_dims);
  for (std::int64_t k = 0; k < out.dims[2]; ++k)
    for (std::int64_t j = 0; j < out.dims[1]; ++j)
      for (std::int64_t i = 0; i < out.dims[0]; ++i) {
        const std::int64_t pi = i + plan.pad_before[0], pj = j + plan.pad_before[1], pk = k + plan.pad_before[2];
        out(i, j, k) = static_cast<float>(sum(pi, pj, pk) / count(pi, pj, pk));
      }
  return out;
}

namespace {

// One separable pass of a 1D window [-r, r] along `axis`. With `any` the
// output is set when any in-grid neighbour is set (dilation); otherwise it
// is set only when every in-grid neighbour is set (erosion).
BinaryMask window_pass(const BinaryMask& in, int axis, int r, bool any) {
  BinaryMask out(in.dims, 0);
  const Dims3& d = in.dims;
  const std::int64_t n = d[axis];
  const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? d[0] : d[0] * d[1]);
  std::vector<std::int64_t> prefix(static_cast<std::size_t>(n + 1));
  Dims3 outer = d;
  outer[axis] = 1;
  for (std::int64_t k = 0; k < outer[2]; ++k)
    for (std::int64_t j = 0; j < outer[1]; ++j)
      for (std::int64_t i = 0; i < outer[0]; ++i) {
        const std::size_t base = in.index(i, j, k);
        prefix[0] = 0;
        for (std::int64_t t = 0; t < n; ++t)
          prefix[t + 1] = prefix[t] + (in.data[base + static_cast<std::size_t>(t * stride)] ? 1 : 0);
        for (std::int64_t t = 0; t < n; ++t) {
          const std::int64_t lo = std::max<std::int64_t>(0, t - r);
          const std::int64_t hi = std::min<std::int64_t>(n - 1, t + r);
          const std::int64_t set = prefix[hi + 1] - prefix[lo];
          const bool v = any ? set > 0 : set == hi - lo + 1;
          out.data[base + static_cast<std::size_t>(t * stride)] = v ? 1 : 0;
        }
      }
  return out;
}

}  // namespace

BinaryMask dilate_3d(const BinaryMask& mask, int radius) {
  if (radius < 1) fail(ErrorCode::InvalidArgument, "morphology radius must be >= 1");
  BinaryMask m = mask;
  for (int axis = 0; axis < 3; ++axis) m = window_pass(m, axis, radius, true);
  return m;
}

BinaryMask erode_3d(const BinaryMask& mask, int radius) {
  if (radius < 1) fail(ErrorCode::InvalidArgument, "morphology radius must be >= 1");
  BinaryMask m = mask;
  for (int axis = 0; axis < 3; ++axis) m = window_pass(m, axis, radius, false);
  return m;
}

BinaryMask closing_3d(const BinaryMask& mask, int radius) { return erode_3d(dilate_3d(mask, radius), radius); }

BinaryMask mask_below(const NiftiImage& img, double threshold) {
  BinaryMask m(img.dims(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = img.data.data[i] < threshold ? 1 : 0;
  return m;
}

BinaryMask mask_equal(const NiftiImage& img, double value) {
  BinaryMask m(img.dims(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = img.data.data[i] == value ? 1 : 0;
  return m;
}

std::int64_t count_true(const BinaryMask& mask) {
  return std::count_if(mask.data.begin(), mask.data.end(), [](std::uint8_t v) { return v != 0; });
}

BinaryMask face_air_mask(const NiftiImage& defaced, int radius) { return closing_3d(mask_equal(defaced, 0.0), radius); }

NiftiImage composite_reface(const NiftiImage& defaced, const NiftiImage& generated, int radius,
                            double air_threshold) {
  require_same_dims(defaced.data, generated.data, "composite_reface");
  const BinaryMask face = face_air_mask(defaced, radius);
  NiftiImage out = defaced;
  for (std::size_t i = 0; i < face.size(); ++i) {
    if (face.data[i]) out.data.data[i] = generated.data.data[i];
  }
  const BinaryMask air = closing_3d(mask_below(out, air_threshold), radius);
  for (std::size_t i = 0; i < face.size(); ++i) {
    if (face.data[i] && air.data[i]) out.data.data[i] = 0.0f;
  }
  return out;
}

}  // namespace reface
