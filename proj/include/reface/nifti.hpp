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
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "reface/grid.hpp"

namespace reface {

// On-disk NIfTI-1 header. Field order and widths follow the format exactly;
// every member is naturally aligned so the struct has no padding.
struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1;
  float intent_p2;
  float intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max;
  float cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax;
  std::int32_t glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b;
  float quatern_c;
  float quatern_d;
  float qoffset_x;
  float qoffset_y;
  float qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

namespace nifti_type {
inline constexpr int kUint8 = 2;
inline constexpr int kInt16 = 4;
inline constexpr int kInt32 = 8;
inline constexpr int kFloat32 = 16;
inline constexpr int kFloat64 = 64;
}  // namespace nifti_type

bool is_supported_datatype(int code);
int bytes_per_voxel(int code);

using Affine = Eigen::Matrix4d;

/// A 3D scalar volume with its voxel-to-world transform.
///
/// Voxel values are held as float32 with the header intensity scaling
/// already applied. The raw header is kept so that fields this library does
/// not interpret survive a read/write cycle.
struct NiftiImage {
  FloatGrid data;
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};
  Affine affine = Affine::Identity();
  int datatype_code = nifti_type::kFloat32;
  double scl_slope = 1.0;
  double scl_inter = 0.0;
  Nifti1Header header{};

  const Dims3& dims() const { return data.dims; }
  std::size_t size() const { return data.size(); }
  float operator()(std::int64_t i, std::int64_t j, std::int64_t k) const { return data(i, j, k); }

  /// Three-letter axis code such as "RAS" or "ASL".
  std::string orientation() const;

  /// Copy of this image sharing geometry and header but holding `values`.
  NiftiImage with_data(FloatGrid values) const;
};

/// Builds an image with a fresh header around `values`.
NiftiImage make_image(FloatGrid values, const Affine& affine, int datatype_code = nifti_type::kFloat32);

std::string orientation_code(const Affine& affine);

/// Largest absolute direction cosine that does not lie on the nearest axis.
double max_off_axis_cosine(const Affine& affine);

NiftiImage read_nifti(const std::filesystem::path& path);
void write_nifti(const NiftiImage& img, const std::filesystem::path& path);

/// Raw NIfTI bytes for an image (what `write_nifti` stores, before any gzip).
std::vector<std::uint8_t> encode_nifti(const NiftiImage& img);
NiftiImage decode_nifti(const std::vector<std::uint8_t>& bytes);

/// Permutes/flips voxel axes so that the orientation code becomes "ASL"
/// while every voxel keeps its world position. Oblique inputs are handled
/// by snapping to the nearest axes; a note is appended to `warnings` when
/// the largest off-axis cosine exceeds 0.2.
NiftiImage reorient_asl(const NiftiImage& img, std::vector<std::string>* warnings = nullptr);

}  // namespace reface
