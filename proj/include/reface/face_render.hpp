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
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reface/nifti.hpp"

namespace reface {

struct TriMesh {
  std::vector<Eigen::Vector3d> vertices;  // world space, mm
  std::vector<std::array<int, 3>> triangles;
  std::vector<Eigen::Vector3d> normals;   // unit, one per vertex

  bool empty() const { return triangles.empty(); }
  double area() const;
};

struct MeshTopology {
  std::int64_t vertices = 0;
  std::int64_t edges = 0;
  std::int64_t faces = 0;
  std::int64_t boundary_edges = 0;     // used by one triangle
  std::int64_t nonmanifold_edges = 0;  // used by more than two
  std::int64_t degenerate_faces = 0;

  std::int64_t euler_characteristic() const { return vertices - edges + faces; }
  bool closed_manifold() const { return boundary_edges == 0 && nonmanifold_edges == 0; }
};

MeshTopology mesh_topology(const TriMesh& mesh);

/// Axis-aligned world-space box used to frame a render.
struct WorldBox {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();
};

WorldBox volume_world_box(const NiftiImage& img);
WorldBox mesh_world_box(const TriMesh& mesh);

/// Orthographic frontal view: the camera sits anterior (+y world) looking
/// posterior; image right is the subject's left (-x) and image up is +z.
/// The light vector points from the surface toward the light, in view space
/// (x right, y up, z into the screen).
struct RenderParams {
  int width = 512;
  int height = 512;
  Eigen::Vector3d light = Eigen::Vector3d(0.3, 0.3, -1.0).normalized();
  double ambient = 0.15;
  double diffuse = 0.85;
  /// Region mapped onto the image; defaults to the mesh bounds.
  std::optional<WorldBox> frame;

  void validate() const;
};

struct Image2D {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, top row first

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double nonblack_fraction() const;
};

/// CDF remap of voxels > 0 onto [0, 255]; voxels <= 0 map to 0.
NiftiImage equalize_histogram(const NiftiImage& img, int bins = 256);

/// Separable Gaussian (sigma in voxels), truncated at ceil(3 sigma), edges clamped.
NiftiImage gaussian_smooth(const NiftiImage& img, double sigma = 1.0);

/// 1D kernel used by gaussian_smooth.
std::vector<double> gaussian_kernel(double sigma);

/// Isosurface of {v >= threshold}. The grid is treated as surrounded by
/// values below the threshold, so the surface is always closed.
TriMesh marching_cubes(const NiftiImage& img, double threshold);

Image2D render_frontal(const TriMesh& mesh, const RenderParams& params = {});

std::vector<std::uint8_t> encode_png(const Image2D& image);
void write_png(const Image2D& image, const std::filesystem::path& path);
std::string obj_text(const TriMesh& mesh);
void write_obj(const TriMesh& mesh, const std::filesystem::path& path);

inline constexpr double kRenderWinsorizeCap = 3000.0;
inline constexpr std::array<double, 5> kCandidateThresholds = {80, 90, 100, 110, 120};

/// Winsorize at 3000, equalize, smooth.
NiftiImage preprocess_for_render(const NiftiImage& img, double sigma = 1.0, double cap = kRenderWinsorizeCap);

struct CandidateRender {
  double threshold = 0.0;
  std::string suffix;  // "_t80" ...
  TriMesh mesh;
  Image2D image;
};

/// Frontal renders of a preprocessed image at each candidate threshold,
/// framed on the volume bounds.
std::vector<CandidateRender> candidate_renders(const NiftiImage& preprocessed, RenderParams params = {},
                                               const std::vector<double>& thresholds = {
                                                   kCandidateThresholds.begin(), kCandidateThresholds.end()});

std::string threshold_suffix(double threshold);

}  // namespace reface
