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

#include "reface/face_render.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <unordered_map>

#include "marching_cubes_tables.hpp"
#include "reface/volume_ops.hpp"

namespace reface {

namespace {

constexpr double kEdgeEps = 1e-6;

// Corner endpoints of each cube edge, in table numbering.
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

constexpr std::array<int, 3> corner_offset(int c) {
  return {(c & 1) ^ ((c >> 1) & 1), (c >> 1) & 1, (c >> 2) & 1};
}

Eigen::Vector3d to_world(const Affine& A, const Eigen::Vector3d& p) {
  return A.topLeftCorner<3, 3>() * p + A.topRightCorner<3, 1>();
}

// World -> view: x right (-x world), y up (+z world), z depth (-y world).
Eigen::Vector3d to_view(const Eigen::Vector3d& w) { return {-w.x(), w.z(), -w.y()}; }

}  // namespace

double TriMesh::area() const {
  double a = 0.0;
  for (const auto& t : triangles) {
    a += 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
  }
  return a;
}

MeshTopology mesh_topology(const TriMesh& mesh) {
  MeshTopology topo;
  topo.vertices = static_cast<std::int64_t>(mesh.vertices.size());
  topo.faces = static_cast<std::int64_t>(mesh.triangles.size());
  std::unordered_map<std::uint64_t, int> edge_use;
  edge_use.reserve(mesh.triangles.size() * 2);
  for (const auto& t : mesh.triangles) {
    if ((mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]).norm() <= 0.0) {
      ++topo.degenerate_faces;
    }
    for (int e = 0; e < 3; ++e) {
      auto a = static_cast<std::uint64_t>(t[e]), b = static_cast<std::uint64_t>(t[(e + 1) % 3]);
      if (a > b) std::swap(a, b);
      ++edge_use[(a << 32) | b];
    }
  }
  topo.edges = static_cast<std::int64_t>(edge_use.size());
  for (const auto& [key, n] : edge_use) {
    if (n == 1) ++topo.boundary_edges;
    if (n > 2) ++topo.nonmanifold_edges;
  }
  return topo;
}

WorldBox volume_world_box(const NiftiImage& img) {
  WorldBox box;
  box.lo.setConstant(std::numeric_limits<double>::infinity());
  box.hi.setConstant(-std::numeric_limits<double>::infinity());
  const Dims3 d = img.dims();
  for (int c = 0; c < 8; ++c) {
    const Eigen::Vector3d p((c & 1) ? static_cast<double>(d[0] - 1) : 0.0, (c & 2) ? static_cast<double>(d[1] - 1) : 0.0,
                            (c & 4) ? static_cast<double>(d[2] - 1) : 0.0);
    const Eigen::Vector3d w = to_world(img.affine, p);
    box.lo = box.lo.cwiseMin(w);
    box.hi = box.hi.cwiseMax(w);
  }
  return box;
}

WorldBox mesh_world_box(const TriMesh& mesh) {
  if (mesh.vertices.empty()) fail(ErrorCode::EmptySurface, "mesh has no vertices");
  WorldBox box{mesh.vertices[0], mesh.vertices[0]};
  for (const auto& v : mesh.vertices) {
    box.lo = box.lo.cwiseMin(v);
    box.hi = box.hi.cwiseMax(v);
  }
  return box;
}

void RenderParams::validate() const {
  if (width < 64 || height < 64) fail(ErrorCode::InvalidArgument, "render size must be at least 64 pixels");
  if (std::abs(light.norm() - 1.0) > 1e-9) fail(ErrorCode::InvalidArgument, "light direction must be unit length");
}

double Image2D::nonblack_fraction() const {
  if (pixels.empty()) return 0.0;
  const auto lit = std::count_if(pixels.begin(), pixels.end(), [](std::uint8_t p) { return p != 0; });
  return static_cast<double>(lit) / static_cast<double>(pixels.size());
}

NiftiImage equalize_histogram(const NiftiImage& img, int bins) {
  if (bins < 2) fail(ErrorCode::InvalidArgument, "equalize_histogram: need at least 2 bins");
  const auto& v = img.data.data;
  if (v.empty()) fail(ErrorCode::EmptyInput, "equalize_histogram: empty volume");
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  if (*mn == *mx) fail(ErrorCode::DegenerateRange, "equalize_histogram: constant volume");
  if (*mx <= 0.0f) fail(ErrorCode::DegenerateRange, "equalize_histogram: no positive voxels");
  const double hi = *mx;
  auto bin_of = [&](float x) {
    return std::min(bins - 1, static_cast<int>(std::floor(static_cast<double>(x) / hi * bins)));
  };
  std::vector<double> cdf(static_cast<std::size_t>(bins), 0.0);
  std::int64_t positive = 0;
  for (float x : v) {
    if (x > 0.0f) {
      cdf[bin_of(x)] += 1.0;
      ++positive;
    }
  }
  double run = 0.0;
  for (double& c : cdf) {
    run += c;
    c = run / static_cast<double>(positive);
  }
  FloatGrid out(img.dims());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.data[i] = v[i] > 0.0f ? static_cast<float>(255.0 * cdf[bin_of(v[i])]) : 0.0f;
  }
  NiftiImage res = img.with_data(std::move(out));
  res.datatype_code = nifti_type::kFloat32;
  res.scl_slope = 1.0;
  res.scl_inter = 0.0;
  return res;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) fail(ErrorCode::InvalidArgument, "gaussian sigma must be positive");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  for (double& x : k) x /= sum;
  return k;
}

NiftiImage gaussian_smooth(const NiftiImage& img, double sigma) {
  const std::vector<double> k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const Dims3 d = img.dims();
  std::vector<double> a(img.data.data.begin(), img.data.data.end()), b(a.size());
  const std::int64_t stride[3] = {1, d[0], d[0] * d[1]};
  for (int axis = 0; axis < 3; ++axis) {
    const std::int64_t n = d[axis];
    for (std::int64_t z = 0; z < d[2]; ++z) {
      for (std::int64_t y = 0; y < d[1]; ++y) {
        for (std::int64_t x = 0; x < d[0]; ++x) {
          const std::int64_t pos[3] = {x, y, z};
          const std::int64_t base = x + d[0] * (y + d[1] * z) - pos[axis] * stride[axis];
          double s = 0.0;
          for (int t = -r; t <= r; ++t) {
            const std::int64_t q = std::clamp<std::int64_t>(pos[axis] + t, 0, n - 1);
            s += k[t + r] * a[base + q * stride[axis]];
          }
          b[x + d[0] * (y + d[1] * z)] = s;
        }
      }
    }
    std::swap(a, b);
  }
  FloatGrid out(d);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = static_cast<float>(a[i]);
  NiftiImage res = img.with_data(std::move(out));
  res.datatype_code = nifti_type::kFloat32;
  res.scl_slope = 1.0;
  res.scl_inter = 0.0;
  return res;
}

TriMesh marching_cubes(const NiftiImage& img, double threshold) {
  const auto& v = img.data.data;
  if (v.empty()) fail(ErrorCode::EmptySurface, "marching_cubes: empty volume");
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  if (!(threshold > *mn && threshold < *mx)) {
    fail(ErrorCode::EmptySurface, "threshold " + std::to_string(threshold) + " lies outside the volume range (" +
                                      std::to_string(*mn) + ", " + std::to_string(*mx) + ")");
  }
  const Dims3 d = img.dims();
  const double pad = *mn;
  // Padded lattice: coordinates -1 .. d inclusive, shifted by one.
  const std::int64_t p0 = d[0] + 2, p1 = d[1] + 2;
  auto value = [&](std::int64_t i, std::int64_t j, std::int64_t k) -> double {
    if (i < 0 || j < 0 || k < 0 || i >= d[0] || j >= d[1] || k >= d[2]) return pad;
    return img.data(i, j, k);
  };

  const bool mirrored = img.affine.topLeftCorner<3, 3>().determinant() < 0.0;
  TriMesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;
  auto vertex_on = [&](std::int64_t i, std::int64_t j, std::int64_t k, int axis, double va, double vb) {
    const std::uint64_t key =
        (static_cast<std::uint64_t>(((k + 1) * p1 + (j + 1)) * p0 + (i + 1)) * 3) + static_cast<std::uint64_t>(axis);
    auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<int>(mesh.vertices.size()));
    if (inserted) {
      const double t = std::clamp((threshold - va) / (vb - va), kEdgeEps, 1.0 - kEdgeEps);
      Eigen::Vector3d p(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
      p[axis] += t;
      mesh.vertices.push_back(to_world(img.affine, p));
    }
    return it->second;
  };

  double corner[8];
  int edge_ids[12];
  for (std::int64_t k = -1; k < d[2]; ++k) {
    for (std::int64_t j = -1; j < d[1]; ++j) {
      for (std::int64_t i = -1; i < d[0]; ++i) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const auto o = corner_offset(c);
          corner[c] = value(i + o[0], j + o[1], k + o[2]);
          if (corner[c] < threshold) cube |= 1 << c;
        }
        const std::uint16_t edges = mc::kEdgeTable[cube];
        if (edges == 0) continue;
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1 << e))) continue;
          int a = kEdgeCorners[e][0], b = kEdgeCorners[e][1];
          auto oa = corner_offset(a), ob = corner_offset(b);
          int axis = 0;
          while (oa[axis] == ob[axis]) ++axis;
          if (oa[axis] > ob[axis]) {
            std::swap(a, b);
            std::swap(oa, ob);
          }
          edge_ids[e] = vertex_on(i + oa[0], j + oa[1], k + oa[2], axis, corner[a], corner[b]);
        }
        const auto& tri = mc::kTriTable[cube];
        for (int t = 0; tri[t] >= 0; t += 3) {
          std::array<int, 3> f{edge_ids[tri[t]], edge_ids[tri[t + 1]], edge_ids[tri[t + 2]]};
          if (mirrored) std::swap(f[1], f[2]);
          mesh.triangles.push_back(f);
        }
      }
    }
  }
  if (mesh.triangles.empty()) fail(ErrorCode::EmptySurface, "isosurface is empty");

  mesh.normals.assign(mesh.vertices.size(), Eigen::Vector3d::Zero());
  for (const auto& t : mesh.triangles) {
    const Eigen::Vector3d n =
        (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
    for (int c = 0; c < 3; ++c) mesh.normals[t[c]] += n;
  }
  for (auto& n : mesh.normals) {
    const double len = n.norm();
    n = len > 0.0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d(0.0, 0.0, 1.0);
  }
  return mesh;
}

Image2D render_frontal(const TriMesh& mesh, const RenderParams& params) {
  params.validate();
  if (mesh.empty()) fail(ErrorCode::EmptySurface, "cannot render an empty mesh");
  const WorldBox box = params.frame ? *params.frame : mesh_world_box(mesh);
  const Eigen::Vector3d vlo = to_view(box.lo), vhi = to_view(box.hi);
  const double u_lo = std::min(vlo.x(), vhi.x()), u_hi = std::max(vlo.x(), vhi.x());
  const double v_lo = std::min(vlo.y(), vhi.y()), v_hi = std::max(vlo.y(), vhi.y());
  const double eu = std::max(u_hi - u_lo, 1e-9), ev = std::max(v_hi - v_lo, 1e-9);
  const double scale = std::min(params.width / eu, params.height / ev);
  const double uc = 0.5 * (u_lo + u_hi), vc = 0.5 * (v_lo + v_hi);

  const int W = params.width, H = params.height;
  std::vector<Eigen::Vector3d> screen(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Eigen::Vector3d p = to_view(mesh.vertices[i]);
    screen[i] = {0.5 * W + (p.x() - uc) * scale, 0.5 * H - (p.y() - vc) * scale, p.z()};
  }

  Image2D img{W, H, std::vector<std::uint8_t>(static_cast<std::size_t>(W) * H, 0)};
  std::vector<double> depth(img.pixels.size(), std::numeric_limits<double>::infinity());
  for (const auto& t : mesh.triangles) {
    const Eigen::Vector3d &a = screen[t[0]], &b = screen[t[1]], &c = screen[t[2]];
    const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    if (area == 0.0) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}))));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}))));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        const double w0 = ((b.x() - px) * (c.y() - py) - (b.y() - py) * (c.x() - px)) / area;
        const double w1 = ((c.x() - px) * (a.y() - py) - (c.y() - py) * (a.x() - px)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double z = w0 * a.z() + w1 * b.z() + w2 * c.z();
        const std::size_t idx = static_cast<std::size_t>(y) * W + x;
        if (!(z < depth[idx])) continue;
        depth[idx] = z;
        Eigen::Vector3d n = w0 * mesh.normals[t[0]] + w1 * mesh.normals[t[1]] + w2 * mesh.normals[t[2]];
        const double len = n.norm();
        const double lambert = len > 0.0 ? std::max(0.0, to_view(n / len).dot(params.light)) : 0.0;
        const double shade = std::clamp(params.ambient + params.diffuse * lambert, 0.0, 1.0);
        img.pixels[idx] = static_cast<std::uint8_t>(std::lround(255.0 * shade));
      }
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_png(const Image2D& image) {
  if (image.width <= 0 || image.height <= 0) fail(ErrorCode::InvalidArgument, "encode_png: empty image");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(ErrorCode::IoError, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    fail(ErrorCode::IoError, "PNG encoding failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t n) {
        auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        buf->insert(buf->end(), data, data + n);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() + static_cast<std::size_t>(y) * image.width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const Image2D& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorCode::IoError, "failed writing " + path.string());
}

std::string obj_text(const TriMesh& mesh) {
  std::string out;
  out.reserve(mesh.vertices.size() * 80 + mesh.triangles.size() * 32);
  char line[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(line, sizeof line, "v %.6f %.6f %.6f\n", v.x(), v.y(), v.z());
    out += line;
  }
  for (const auto& n : mesh.normals) {
    std::snprintf(line, sizeof line, "vn %.6f %.6f %.6f\n", n.x(), n.y(), n.z());
    out += line;
  }
  for (const auto& t : mesh.triangles) {
    std::snprintf(line, sizeof line, "f %d//%d %d//%d %d//%d\n", t[0] + 1, t[0] + 1, t[1] + 1, t[1] + 1, t[2] + 1,
                  t[2] + 1);
    out += line;
  }
  return out;
}

void write_obj(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  f << obj_text(mesh);
  if (!f) fail(ErrorCode::IoError, "failed writing " + path.string());
}

NiftiImage preprocess_for_render(const NiftiImage& img, double sigma, double cap) {
  return gaussian_smooth(equalize_histogram(winsorize(img, cap)), sigma);
}

std::string threshold_suffix(double threshold) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_t%g", threshold);
  return buf;
}

std::vector<CandidateRender> candidate_renders(const NiftiImage& preprocessed, RenderParams params,
                                               const std::vector<double>& thresholds) {
  if (!params.frame) params.frame = volume_world_box(preprocessed);
  std::vector<CandidateRender> out;
  for (double t : thresholds) {
    CandidateRender c;
    c.threshold = t;
    c.suffix = threshold_suffix(t);
    c.mesh = marching_cubes(preprocessed, t);
    c.image = render_frontal(c.mesh, params);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace reface
