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

#include "reface/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "reface/rng.hpp"

namespace reface {

namespace {

double sq(double v) { return v * v; }

// Ellipsoid level: < 1 inside.
double ellipsoid(double a, double s, double l, double ra, double rs, double rl) {
  return sq(a / ra) + sq(s / rs) + sq(l / rl);
}

}  // namespace

Affine asl_affine(const Dims3& dims, double voxel_mm) {
  Affine A = Affine::Zero();
  A(1, 0) = voxel_mm;   // axis 0 -> anterior
  A(2, 1) = voxel_mm;   // axis 1 -> superior
  A(0, 2) = -voxel_mm;  // axis 2 -> left
  A(3, 3) = 1.0;
  A(1, 3) = -voxel_mm * (static_cast<double>(dims[0]) - 1) / 2;
  A(2, 3) = -voxel_mm * (static_cast<double>(dims[1]) - 1) / 2;
  A(0, 3) = voxel_mm * (static_cast<double>(dims[2]) - 1) / 2;
  return A;
}

HeadPhantom make_head_phantom(const Dims3& dims, std::uint64_t seed, double voxel_mm) {
  if (dims[0] < 16 || dims[1] < 16 || dims[2] < 16) fail(ErrorCode::InvalidArgument, "phantom dims must be >= 16");
  FloatGrid vol(dims);
  BinaryMask brain(dims), face(dims);
  Rng rng(seed);

  const double ca = (static_cast<double>(dims[0]) - 1) / 2, cs = (static_cast<double>(dims[1]) - 1) / 2,
               cl = (static_cast<double>(dims[2]) - 1) / 2;
  const double ra = 0.40 * dims[0], rs = 0.44 * dims[1], rl = 0.36 * dims[2];

  for (std::int64_t k = 0; k < dims[2]; ++k) {
    for (std::int64_t j = 0; j < dims[1]; ++j) {
      for (std::int64_t i = 0; i < dims[0]; ++i) {
        const double a = static_cast<double>(i) - ca, s = static_cast<double>(j) - cs,
                     l = static_cast<double>(k) - cl;
        const double head = ellipsoid(a + 0.04 * dims[0], s, l, ra, rs, rl);
        const double cranium = ellipsoid(a + 0.06 * dims[0], s - 0.12 * dims[1], l, 0.30 * dims[0],
                                         0.30 * dims[1], 0.28 * dims[2]);
        const double nose = ellipsoid(a - 0.34 * dims[0], s + 0.08 * dims[1], l, 0.10 * dims[0], 0.10 * dims[1],
                                      0.05 * dims[2]);
        const double chin = ellipsoid(a - 0.24 * dims[0], s + 0.36 * dims[1], l, 0.14 * dims[0],
                                      0.08 * dims[1], 0.16 * dims[2]);
        const double eye_l = ellipsoid(a - 0.24 * dims[0], s - 0.02 * dims[1], l - 0.11 * dims[2],
                                       0.06 * dims[0], 0.05 * dims[1], 0.06 * dims[2]);
        const double eye_r = ellipsoid(a - 0.24 * dims[0], s - 0.02 * dims[1], l + 0.11 * dims[2],
                                       0.06 * dims[0], 0.05 * dims[1], 0.06 * dims[2]);

        double v = 0.0;
        if (head < 1.0 || nose < 1.0 || chin < 1.0) {
          if (head < 0.80) {
            v = 700.0;  // soft tissue
          } else if (head < 0.88) {
            v = 150.0;  // skull
          } else {
            v = 1200.0;  // scalp and skin
          }
          if (head >= 1.0) v = 1200.0;
          if (eye_l < 1.0 || eye_r < 1.0) v = 250.0;
          if (cranium < 1.0) {
            brain(i, j, k) = 1;
            v = cranium < 0.55 ? 1450.0 : (cranium < 0.9 ? 1000.0 : 350.0);
          }
          v = std::max(1.0, v + 20.0 * rng.normal());
        }
        vol(i, j, k) = static_cast<float>(v);
        // Face block: anterior and inferior of the cranium.
        const bool anterior = a > 0.10 * dims[0];
        const bool inferior = s < 0.05 * dims[1];
        face(i, j, k) = anterior && inferior && !brain(i, j, k) && v > 0.0 ? 1 : 0;
      }
    }
  }

  HeadPhantom p;
  p.original = make_image(vol, asl_affine(dims, voxel_mm), nifti_type::kInt16);
  FloatGrid defaced = vol;
  for (std::size_t n = 0; n < defaced.data.size(); ++n) {
    if (face.data[n]) defaced.data[n] = 0.0f;
  }
  p.defaced = make_image(std::move(defaced), p.original.affine, nifti_type::kInt16);
  p.brain = std::move(brain);
  p.face_region = std::move(face);
  for (float& x : p.original.data.data) x = std::round(x);
  for (float& x : p.defaced.data.data) x = std::round(x);
  return p;
}

}  // namespace reface
