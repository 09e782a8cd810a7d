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

#include <cstdint>

#include "reface/nifti.hpp"

namespace reface {

/// Synthetic T1w-like head in ASL voxel order with a face on the anterior,
/// inferior side. Background is exactly zero.
struct HeadPhantom {
  NiftiImage original;
  NiftiImage defaced;  // face region set to zero
  BinaryMask brain;
  BinaryMask face_region;
};

HeadPhantom make_head_phantom(const Dims3& dims = {64, 64, 64}, std::uint64_t seed = 0, double voxel_mm = 1.0);

/// Affine for ASL storage order with the volume centred on the world origin.
Affine asl_affine(const Dims3& dims, double voxel_mm);

}  // namespace reface
