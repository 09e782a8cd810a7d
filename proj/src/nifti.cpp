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

#include "reface/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <zlib.h>

namespace reface {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DegenerateAffine: return "DegenerateAffine";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::VolumeTooLarge: return "VolumeTooLarge";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingTensor: return "MissingTensor";
    case ErrorCode::NumericalError: return "NumericalError";
    case ErrorCode::EmptySurface: return "EmptySurface";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DegenerateTies: return "DegenerateTies";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::PartialReport: return "PartialReport";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Error";
}

bool is_supported_datatype(int code) {
  switch (code) {
    case nifti_type::kUint8:
    case nifti_type::kInt16:
    case nifti_type::kInt32:
    case nifti_type::kFloat32:
    case nifti_type::kFloat64:
      return true;
    default:
      return false;
  }
}

int bytes_per_voxel(int code) {
  switch (code) {
    case nifti_type::kUint8: return 1;
    case nifti_type::kInt16: return 2;
    case nifti_type::kInt32: return 4;
    case nifti_type::kFloat32: return 4;
    case nifti_type::kFloat64: return 8;
    default: fail(ErrorCode::UnsupportedDatatype, "datatype code " + std::to_string(code));
  }
}

namespace {

constexpr std::int64_t kVoxOffset = 352;

template <typename T>
T byteswap_value(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> raw;
  std::memcpy(raw.data(), &v, sizeof(T));
  std::reverse(raw.begin(), raw.end());
  std::memcpy(&v, raw.data(), sizeof(T));
  return v;
}

template <typename T, std::size_t N>
void swap_array(T (&arr)[N]) {
  for (auto& v : arr) v = byteswap_value(v);
}

void swap_header(Nifti1Header& h) {
  h.sizeof_hdr = byteswap_value(h.sizeof_hdr);
  h.extents = byteswap_value(h.extents);
  h.session_error = byteswap_value(h.session_error);
  swap_array(h.dim);
  h.intent_p1 = byteswap_value(h.intent_p1);
  h.intent_p2 = byteswap_value(h.intent_p2);
  h.intent_p3 = byteswap_value(h.intent_p3);
  h.intent_code = byteswap_value(h.intent_code);
  h.datatype = byteswap_value(h.datatype);
  h.bitpix = byteswap_value(h.bitpix);
  h.slice_start = byteswap_value(h.slice_start);
  swap_array(h.pixdim);
  h.vox_offset = byteswap_value(h.vox_offset);
  h.scl_slope = byteswap_value(h.scl_slope);
  h.scl_inter = byteswap_value(h.scl_inter);
  h.slice_end = byteswap_value(h.slice_end);
  h.cal_max = byteswap_value(h.cal_max);
  h.cal_min = byteswap_value(h.cal_min);
  h.slice_duration = byteswap_value(h.slice_duration);
  h.toffset = byteswap_value(h.toffset);
  h.glmax = byteswap_value(h.glmax);
  h.glmin = byteswap_value(h.glmin);
  h.qform_code = byteswap_value(h.qform_code);
  h.sform_code = byteswap_value(h.sform_code);
  h.quatern_b = byteswap_value(h.quatern_b);
  h.quatern_c = byteswap_value(h.quatern_c);
  h.quatern_d = byteswap_value(h.quatern_d);
  h.qoffset_x = byteswap_value(h.qoffset_x);
  h.qoffset_y = byteswap_value(h.qoffset_y);
  h.qoffset_z = byteswap_value(h.qoffset_z);
  swap_array(h.srow_x);
  swap_array(h.srow_y);
  swap_array(h.srow_z);
}

bool has_magic(const Nifti1Header& h, const char* magic) { return std::memcmp(h.magic, magic, 4) == 0; }

Affine quatern_to_affine(const Nifti1Header& h) {
  double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
  double a_sq = 1.0 - (b * b + c * c + d * d);
  double a = 0.0;
  if (a_sq < 1e-7) {
    const double norm = std::sqrt(b * b + c * c + d * d);
    b /= norm;
    c /= norm;
    d /= norm;
  } else {
    a = std::sqrt(a_sq);
  }
  Eigen::Matrix3d r;
  r << a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c),
      2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b),
      2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b;
  const double qfac = h.pixdim[0] < 0 ? -1.0 : 1.0;
  auto pix = [&](int i) { return h.pixdim[i] > 0 ? static_cast<double>(h.pixdim[i]) : 1.0; };
  const Eigen::Vector3d scale(pix(1), pix(2), pix(3) * qfac);
  Affine m = Affine::Identity();
  m.topLeftCorner<3, 3>() = r * scale.asDiagonal();
  m(0, 3) = h.qoffset_x;
  m(1, 3) = h.qoffset_y;
  m(2, 3) = h.qoffset_z;
  return m;
}

Affine sform_to_affine(const Nifti1Header& h) {
  Affine m = Affine::Identity();
  for (int j = 0; j < 4; ++j) {
    m(0, j) = h.srow_x[j];
    m(1, j) = h.srow_y[j];
    m(2, j) = h.srow_z[j];
  }
  return m;
}

Affine pixdim_affine(const Nifti1Header& h) {
  Affine m = Affine::Identity();
  for (int i = 0; i < 3; ++i) m(i, i) = h.pixdim[i + 1] > 0 ? h.pixdim[i + 1] : 1.0;
  return m;
}

bool invertible(const Affine& m) { return std::abs(m.topLeftCorner<3, 3>().determinant()) > 1e-12; }

struct Quaternion {
  double b, c, d, qfac;
  bool ok;
};

// Quaternion parameters for an affine whose normalised columns form an
// orthonormal basis; `ok` is false for sheared or oblique-scaled matrices.
Quaternion affine_to_quatern(const Affine& m) {
  Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
  for (int j = 0; j < 3; ++j) {
    const double n = r.col(j).norm();
    if (n <= 0) return {0, 0, 0, 1, false};
    r.col(j) /= n;
  }
  if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6) return {0, 0, 0, 1, false};
  double qfac = 1.0;
  if (r.determinant() < 0) {
    qfac = -1.0;
    r.col(2) = -r.col(2);
  }
  const double r11 = r(0, 0), r12 = r(0, 1), r13 = r(0, 2);
  const double r21 = r(1, 0), r22 = r(1, 1), r23 = r(1, 2);
  const double r31 = r(2, 0), r32 = r(2, 1), r33 = r(2, 2);
  double a = r11 + r22 + r33 + 1.0, b, c, d;
  if (a > 0.5) {
    a = 0.5 * std::sqrt(a);
    b = 0.25 * (r32 - r23) / a;
    c = 0.25 * (r13 - r31) / a;
    d = 0.25 * (r21 - r12) / a;
  } else {
    const double xd = 1.0 + r11 - (r22 + r33);
    const double yd = 1.0 + r22 - (r11 + r33);
    const double zd = 1.0 + r33 - (r11 + r22);
    if (xd > 1.0) {
      b = 0.5 * std::sqrt(xd);
      c = 0.25 * (r12 + r21) / b;
      d = 0.25 * (r13 + r31) / b;
      a = 0.25 * (r32 - r23) / b;
    } else if (yd > 1.0) {
      c = 0.5 * std::sqrt(yd);
      b = 0.25 * (r12 + r21) / c;
      d = 0.25 * (r23 + r32) / c;
      a = 0.25 * (r13 - r31) / c;
    } else {
      d = 0.5 * std::sqrt(zd);
      b = 0.25 * (r13 + r31) / d;
      c = 0.25 * (r23 + r32) / d;
      a = 0.25 * (r21 - r12) / d;
    }
    if (a < 0.0) {
      b = -b;
      c = -c;
      d = -d;
    }
  }
  return {b, c, d, qfac, true};
}

template <typename Raw>
void decode_voxels(const std::uint8_t* src, std::size_t n, bool swap, double slope, double inter, float* dst) {
  const bool scaled = slope != 0.0 && std::isfinite(slope) && !(slope == 1.0 && inter == 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    Raw v;
    std::memcpy(&v, src + i * sizeof(Raw), sizeof(Raw));
    if (swap) v = byteswap_value(v);
    dst[i] = scaled ? static_cast<float>(static_cast<double>(v) * slope + inter) : static_cast<float>(v);
  }
}

template <typename Raw>
void encode_voxels(const float* src, std::size_t n, double slope, double inter, std::uint8_t* dst) {
  const bool scaled = slope != 0.0 && std::isfinite(slope) && !(slope == 1.0 && inter == 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    Raw v;
    if constexpr (std::is_integral_v<Raw>) {
      double x = scaled ? (static_cast<double>(src[i]) - inter) / slope : static_cast<double>(src[i]);
      x = std::nearbyint(x);
      x = std::clamp(x, static_cast<double>(std::numeric_limits<Raw>::min()),
                     static_cast<double>(std::numeric_limits<Raw>::max()));
      v = static_cast<Raw>(x);
    } else {
      v = scaled ? static_cast<Raw>((static_cast<double>(src[i]) - inter) / slope) : static_cast<Raw>(src[i]);
    }
    std::memcpy(dst + i * sizeof(Raw), &v, sizeof(Raw));
  }
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 20);
  while (true) {
    const int got = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (got < 0) {
      gzclose(f);
      fail(ErrorCode::TruncatedFile, "corrupt compressed stream in " + path.string());
    }
    if (got == 0) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + got);
  }
  // gzclose reports Z_BUF_ERROR when a gzip stream ended prematurely.
  if (gzclose(f) != Z_OK) fail(ErrorCode::TruncatedFile, "truncated compressed stream in " + path.string());
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

NiftiImage decode_impl(const std::vector<std::uint8_t>& bytes, const std::vector<std::uint8_t>* separate_data) {
  if (bytes.size() < sizeof(Nifti1Header)) fail(ErrorCode::ParseError, "file shorter than the 348-byte header");
  Nifti1Header h;
  std::memcpy(&h, bytes.data(), sizeof h);
  bool swap = false;
  if (h.dim[0] < 1 || h.dim[0] > 7) {
    Nifti1Header swapped = h;
    swap_header(swapped);
    if (swapped.dim[0] < 1 || swapped.dim[0] > 7) fail(ErrorCode::ParseError, "dim[0] out of range in either byte order");
    h = swapped;
    swap = true;
  }
  if (h.sizeof_hdr != 348) fail(ErrorCode::ParseError, "header size field is " + std::to_string(h.sizeof_hdr));
  const bool single = has_magic(h, "n+1\0");
  const bool pair = has_magic(h, "ni1\0");
  if (!single && !pair) fail(ErrorCode::ParseError, "bad magic bytes");
  if (!is_supported_datatype(h.datatype)) fail(ErrorCode::UnsupportedDatatype, "datatype code " + std::to_string(h.datatype));

  Dims3 dims{1, 1, 1};
  for (int i = 0; i < 3 && i < h.dim[0]; ++i) {
    if (h.dim[i + 1] < 1) fail(ErrorCode::ParseError, "non-positive dimension");
    dims[i] = h.dim[i + 1];
  }
  for (int i = 3; i < h.dim[0]; ++i) {
    if (h.dim[i + 1] > 1) fail(ErrorCode::UnsupportedDatatype, "only single 3D volumes are supported");
  }

  NiftiImage img;
  // Retained header is kept in native byte order and re-emitted little-endian.
  img.header = h;
  img.datatype_code = h.datatype;
  img.scl_slope = h.scl_slope;
  img.scl_inter = h.scl_inter;
  for (int i = 0; i < 3; ++i) img.voxel_size[i] = h.pixdim[i + 1] > 0 ? h.pixdim[i + 1] : 1.0;

  if (h.qform_code > 0 && invertible(quatern_to_affine(h))) {
    img.affine = quatern_to_affine(h);
  } else if (h.sform_code > 0 && invertible(sform_to_affine(h))) {
    img.affine = sform_to_affine(h);
  } else {
    img.affine = pixdim_affine(h);
  }
  if (!invertible(img.affine)) fail(ErrorCode::DegenerateAffine, "voxel-to-world transform is singular");

  const std::size_t n = static_cast<std::size_t>(voxel_count(dims));
  const std::size_t nbytes = n * static_cast<std::size_t>(bytes_per_voxel(h.datatype));
  const std::vector<std::uint8_t>& source = separate_data ? *separate_data : bytes;
  const std::size_t offset = separate_data ? static_cast<std::size_t>(std::max(0.0f, h.vox_offset))
                                           : static_cast<std::size_t>(std::max(348.0f, h.vox_offset));
  if (source.size() < offset + nbytes) fail(ErrorCode::TruncatedFile, "data section shorter than header declares");

  img.data = FloatGrid(dims);
  const std::uint8_t* src = source.data() + offset;
  float* dst = img.data.data.data();
  const double slope = h.scl_slope, inter = h.scl_inter;
  switch (h.datatype) {
    case nifti_type::kUint8: decode_voxels<std::uint8_t>(src, n, swap, slope, inter, dst); break;
    case nifti_type::kInt16: decode_voxels<std::int16_t>(src, n, swap, slope, inter, dst); break;
    case nifti_type::kInt32: decode_voxels<std::int32_t>(src, n, swap, slope, inter, dst); break;
    case nifti_type::kFloat32: decode_voxels<float>(src, n, swap, slope, inter, dst); break;
    case nifti_type::kFloat64: decode_voxels<double>(src, n, swap, slope, inter, dst); break;
  }
  return img;
}

}  // namespace

std::string orientation_code(const Affine& affine) {
  static constexpr char kPos[3] = {'R', 'A', 'S'};
  static constexpr char kNeg[3] = {'L', 'P', 'I'};
  std::string code(3, '?');
  for (int j = 0; j < 3; ++j) {
    const Eigen::Vector3d col = affine.block<3, 1>(0, j);
    int axis = 0;
    col.cwiseAbs().maxCoeff(&axis);
    code[j] = col(axis) >= 0 ? kPos[axis] : kNeg[axis];
  }
  return code;
}

double max_off_axis_cosine(const Affine& affine) {
  double worst = 0.0;
  for (int j = 0; j < 3; ++j) {
    Eigen::Vector3d col = affine.block<3, 1>(0, j);
    const double n = col.norm();
    if (n <= 0) continue;
    col = col.cwiseAbs() / n;
    int axis = 0;
    col.maxCoeff(&axis);
    for (int i = 0; i < 3; ++i) {
      if (i != axis) worst = std::max(worst, col(i));
    }
  }
  return worst;
}

std::string NiftiImage::orientation() const { return orientation_code(affine); }

NiftiImage NiftiImage::with_data(FloatGrid values) const {
  require_same_dims(values, data, "with_data");
  NiftiImage out = *this;
  out.data = std::move(values);
  return out;
}

NiftiImage make_image(FloatGrid values, const Affine& affine, int datatype_code) {
  if (!is_supported_datatype(datatype_code)) fail(ErrorCode::UnsupportedDatatype, "datatype code " + std::to_string(datatype_code));
  NiftiImage img;
  img.data = std::move(values);
  img.affine = affine;
  img.datatype_code = datatype_code;
  for (int j = 0; j < 3; ++j) img.voxel_size[j] = affine.block<3, 1>(0, j).norm();
  Nifti1Header& h = img.header;
  std::memset(&h, 0, sizeof h);
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.scl_slope = 1.0f;
  h.xyzt_units = 2;  // millimetres
  h.qform_code = 1;
  h.sform_code = 1;
  std::memcpy(h.magic, "n+1\0", 4);
  return img;
}

std::vector<std::uint8_t> encode_nifti(const NiftiImage& img) {
  const Dims3& dims = img.dims();
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) fail(ErrorCode::InvalidArgument, "dimensions must be positive");
  if (img.data.size() != static_cast<std::size_t>(voxel_count(dims))) fail(ErrorCode::ShapeMismatch, "voxel buffer size");
  if (!invertible(img.affine)) fail(ErrorCode::DegenerateAffine, "cannot write a singular affine");
  const int bpv = bytes_per_voxel(img.datatype_code);

  Nifti1Header h = img.header;
  h.sizeof_hdr = 348;
  h.dim[0] = 3;
  for (int i = 0; i < 3; ++i) h.dim[i + 1] = static_cast<std::int16_t>(dims[i]);
  for (int i = 4; i < 8; ++i) h.dim[i] = 1;
  h.datatype = static_cast<std::int16_t>(img.datatype_code);
  h.bitpix = static_cast<std::int16_t>(8 * bpv);
  h.vox_offset = static_cast<float>(kVoxOffset);
  h.scl_slope = static_cast<float>(img.scl_slope);
  h.scl_inter = static_cast<float>(img.scl_inter);
  for (int i = 0; i < 3; ++i) h.pixdim[i + 1] = static_cast<float>(img.voxel_size[i]);
  std::memcpy(h.magic, "n+1\0", 4);

  const Quaternion q = affine_to_quatern(img.affine);
  if (q.ok) {
    if (h.qform_code <= 0) h.qform_code = 1;
    h.quatern_b = static_cast<float>(q.b) + 0.0f;
    h.quatern_c = static_cast<float>(q.c) + 0.0f;
    h.quatern_d = static_cast<float>(q.d) + 0.0f;
    h.pixdim[0] = static_cast<float>(q.qfac);
    for (int i = 0; i < 3; ++i) h.pixdim[i + 1] = static_cast<float>(img.affine.block<3, 1>(0, i).norm());
  } else {
    h.qform_code = 0;
    h.quatern_b = h.quatern_c = h.quatern_d = 0.0f;
    h.pixdim[0] = 1.0f;
  }
  h.qoffset_x = static_cast<float>(img.affine(0, 3)) + 0.0f;
  h.qoffset_y = static_cast<float>(img.affine(1, 3)) + 0.0f;
  h.qoffset_z = static_cast<float>(img.affine(2, 3)) + 0.0f;
  if (h.sform_code <= 0) h.sform_code = 1;
  // Adding +0 folds negative zeros so equal affines encode to equal bytes.
  for (int j = 0; j < 4; ++j) {
    h.srow_x[j] = static_cast<float>(img.affine(0, j)) + 0.0f;
    h.srow_y[j] = static_cast<float>(img.affine(1, j)) + 0.0f;
    h.srow_z[j] = static_cast<float>(img.affine(2, j)) + 0.0f;
  }

  const std::size_t n = img.data.size();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(kVoxOffset) + n * static_cast<std::size_t>(bpv), 0);
  std::memcpy(out.data(), &h, sizeof h);
  // Bytes 348..351 are the zeroed extension flag.
  std::uint8_t* dst = out.data() + kVoxOffset;
  const float* src = img.data.data.data();
  switch (img.datatype_code) {
    case nifti_type::kUint8: encode_voxels<std::uint8_t>(src, n, img.scl_slope, img.scl_inter, dst); break;
    case nifti_type::kInt16: encode_voxels<std::int16_t>(src, n, img.scl_slope, img.scl_inter, dst); break;
    case nifti_type::kInt32: encode_voxels<std::int32_t>(src, n, img.scl_slope, img.scl_inter, dst); break;
    case nifti_type::kFloat32: encode_voxels<float>(src, n, img.scl_slope, img.scl_inter, dst); break;
    case nifti_type::kFloat64: encode_voxels<double>(src, n, img.scl_slope, img.scl_inter, dst); break;
  }
  return out;
}

NiftiImage decode_nifti(const std::vector<std::uint8_t>& bytes) { return decode_impl(bytes, nullptr); }

NiftiImage read_nifti(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::IoError, "no such file: " + path.string());
  std::vector<std::uint8_t> bytes = read_all(path);
  if (bytes.size() >= sizeof(Nifti1Header) && std::memcmp(bytes.data() + 344, "ni1\0", 4) == 0) {
    std::filesystem::path img_path = path;
    const std::string s = path.string();
    if (ends_with(s, ".hdr.gz")) {
      img_path = s.substr(0, s.size() - 7) + ".img.gz";
    } else {
      img_path.replace_extension(".img");
    }
    if (!std::filesystem::exists(img_path)) fail(ErrorCode::TruncatedFile, "missing data file " + img_path.string());
    const std::vector<std::uint8_t> data = read_all(img_path);
    return decode_impl(bytes, &data);
  }
  return decode_impl(bytes, nullptr);
}

void write_nifti(const NiftiImage& img, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_nifti(img);
  if (ends_with(path.string(), ".gz")) {
    gzFile f = gzopen(path.string().c_str(), "wb6");
    if (f == nullptr) fail(ErrorCode::IoError, "cannot write " + path.string());
    const int wrote = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    const int closed = gzclose(f);
    if (wrote != static_cast<int>(bytes.size()) || closed != Z_OK) fail(ErrorCode::IoError, "short write to " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

NiftiImage reorient_asl(const NiftiImage& img, std::vector<std::string>* warnings) {
  const Eigen::Matrix3d lin = img.affine.topLeftCorner<3, 3>();
  if (!invertible(img.affine)) fail(ErrorCode::DegenerateAffine, "voxel-to-world transform is singular");
  Eigen::Matrix3d cosines = lin;
  for (int j = 0; j < 3; ++j) cosines.col(j) /= cosines.col(j).norm();

  // world_of[j]: world axis matched to voxel axis j, chosen as the assignment
  // maximising the summed absolute cosines.
  std::array<int, 3> perm{0, 1, 2};
  std::array<int, 3> best = perm;
  double best_score = -1.0;
  do {
    double score = 0.0;
    for (int j = 0; j < 3; ++j) score += std::abs(cosines(perm[j], j));
    if (score > best_score + 1e-12) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  const std::array<int, 3>& world_of = best;

  if (warnings != nullptr && max_off_axis_cosine(img.affine) > 0.2) {
    warnings->push_back("near-oblique affine (max off-axis cosine " + std::to_string(max_off_axis_cosine(img.affine)) +
                        "); snapped to nearest axes without interpolation");
  }

  // Output axis 0 points anterior (+y), axis 1 superior (+z), axis 2 left (-x).
  static constexpr std::array<int, 3> kTargetWorld{1, 2, 0};
  static constexpr std::array<double, 3> kTargetSign{1.0, 1.0, -1.0};
  std::array<int, 3> source_axis{};
  std::array<bool, 3> flip{};
  for (int o = 0; o < 3; ++o) {
    const int j = static_cast<int>(std::find(world_of.begin(), world_of.end(), kTargetWorld[o]) - world_of.begin());
    source_axis[o] = j;
    const double sign = cosines(kTargetWorld[o], j) >= 0 ? 1.0 : -1.0;
    flip[o] = sign != kTargetSign[o];
  }

  const Dims3& in_dims = img.dims();
  Dims3 out_dims{};
  for (int o = 0; o < 3; ++o) out_dims[o] = in_dims[source_axis[o]];

  // in_index = M * out_index (homogeneous).
  Affine m = Affine::Zero();
  m(3, 3) = 1.0;
  for (int o = 0; o < 3; ++o) {
    const int j = source_axis[o];
    m(j, o) = flip[o] ? -1.0 : 1.0;
    m(j, 3) = flip[o] ? static_cast<double>(in_dims[j] - 1) : 0.0;
  }

  NiftiImage out = img;
  out.data = FloatGrid(out_dims);
  out.affine = img.affine * m;
  for (int o = 0; o < 3; ++o) out.voxel_size[o] = img.voxel_size[source_axis[o]];

  std::array<std::int64_t, 3> in_idx{};
  for (std::int64_t k = 0; k < out_dims[2]; ++k) {
    for (std::int64_t jj = 0; jj < out_dims[1]; ++jj) {
      for (std::int64_t i = 0; i < out_dims[0]; ++i) {
        const std::array<std::int64_t, 3> o_idx{i, jj, k};
        for (int o = 0; o < 3; ++o) {
          const int j = source_axis[o];
          in_idx[j] = flip[o] ? in_dims[j] - 1 - o_idx[o] : o_idx[o];
        }
        out.data(i, jj, k) = img.data(in_idx[0], in_idx[1], in_idx[2]);
      }
    }
  }
  return out;
}

}  // namespace reface
