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

#include <span>
#include <vector>

#include "reface/grid.hpp"
#include "reface/nifti.hpp"

namespace reface {

/// Clamps every voxel to at most `cap`.
NiftiImage winsorize(const NiftiImage& img, double cap);

/// Percentile of `values` with linear interpolation between order
/// statistics (position p/100 * (n - 1) in the sorted list).
double percentile_linear(std::vector<double> values, double percentile);

/// Winsorizing cap: the given percentile of per-scan maximum intensities.
double compute_cap(std::span<const double> per_scan_maxima, double percentile = 80.0);

/// Linear intensity map scaled = a * raw + b sending [source_min, source_max]
/// onto [-1, 1].
struct ScaleCoeffs {
  double a = 1.0;
  double b = 0.0;
  double source_min = -1.0;
  double source_max = 1.0;

  double apply(double raw) const { return a * raw + b; }
  double invert(double scaled) const { return (scaled - b) / a; }
};

ScaleCoeffs fit_scale(const NiftiImage& img);
NiftiImage apply_scale(const NiftiImage& img, const ScaleCoeffs& coeffs);
NiftiImage invert_scale(const NiftiImage& img, const ScaleCoeffs& coeffs);

/// Corner-anchored sub-volume layout. Axes shorter than the tile are
/// zero-padded symmetrically up to the tile size; each axis then carries one
/// origin (exact fit) or two (0 and padded - tile).
struct TilePlan {
  Dims3 tile_shape{128, 128, 128};
  Dims3 volume_dims{0, 0, 0};
  Dims3 padded_dims{0, 0, 0};
  Dims3 pad_before{0, 0, 0};
  std::vector<Dims3> origins;
};

TilePlan plan_tiles(const Dims3& dims, const Dims3& tile = {128, 128, 128});

/// Number of tiles covering each voxel of the padded grid.
Grid3<int> coverage_count(const TilePlan& plan);

std::vector<FloatGrid> split_tiles(const FloatGrid& volume, const TilePlan& plan, float pad_value = 0.0f);

/// Mean of all tiles covering each voxel, cropped back to the volume dims.
FloatGrid recombine(const std::vector<FloatGrid>& tiles, const TilePlan& plan);

// Morphology uses the 3x3x3 cube repeated `radius` times. Dilation treats
// the outside of the grid as background and erosion treats it as
// foreground, which makes the closing extensive and idempotent up to the
// grid border.
BinaryMask dilate_3d(const BinaryMask& mask, int radius = 1);
BinaryMask erode_3d(const BinaryMask& mask, int radius = 1);
BinaryMask closing_3d(const BinaryMask& mask, int radius = 1);

BinaryMask mask_below(const NiftiImage& img, double threshold);
BinaryMask mask_equal(const NiftiImage& img, double value);
std::int64_t count_true(const BinaryMask& mask);

/// Closed zero-value region of a defaced volume: where the face and the
/// surrounding air were removed.
BinaryMask face_air_mask(const NiftiImage& defaced, int radius = 1);

/// Pastes generated intensities into the face/air region of `defaced`, then
/// zeroes low-intensity air (closed mask of values below `air_threshold`)
/// inside that region. Voxels outside the face/air region are untouched.
NiftiImage composite_reface(const NiftiImage& defaced, const NiftiImage& generated, int radius = 1,
                            double air_threshold = 3.0);

}  // namespace reface
