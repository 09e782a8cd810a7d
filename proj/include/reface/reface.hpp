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
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reface/model_weights.hpp"
#include "reface/networks.hpp"
#include "reface/nifti.hpp"
#include "reface/volume_ops.hpp"

namespace reface {

struct RefaceOptions {
  double dropout_p = 0.25;
  std::uint64_t seed = 0;
  int threads = 1;
  int closing_radius = 1;
  double air_threshold = 3.0;
  /// Overrides the cap stored in the weights metadata.
  std::optional<double> winsorize_cap;
  /// Overrides the tile shape stored in the weights metadata.
  std::optional<Dims3> tile_shape;
};

/// Wall-clock seconds per pipeline stage, in execution order.
using StageTimings = std::vector<std::pair<std::string, double>>;

/// Generator settings for inference: the configuration echoed in the weights
/// metadata when present, otherwise fallback.
GeneratorConfig inference_config(const ModelWeights& w, const GeneratorConfig& fallback = {});

/// Single forward passes straight from stored weights.
Tensor4<float> generator_forward(const Tensor4<float>& y, const ModelWeights& w, const GeneratorConfig& cfg,
                                 Rng* rng = nullptr);
Tensor4<float> discriminator_forward(const Tensor4<float>& x, const Tensor4<float>& y, const ModelWeights& w,
                                     const DiscriminatorConfig& cfg);

/// Runs the generator on each tile with dropout seeded per tile, so results
/// do not depend on the thread count.
std::vector<FloatGrid> generate_tiles(const std::vector<FloatGrid>& tiles, const Generator<float>& gen,
                                      const ParameterSet<float>& params, std::uint64_t seed, int threads);

/// Full inference pipeline on an ASL-oriented defaced image.
NiftiImage reface_image(const NiftiImage& defaced, const ModelWeights& w, const GeneratorConfig& cfg,
                  const RefaceOptions& options = {}, StageTimings* timings = nullptr);

Tensor4<float> grid_to_tensor(const FloatGrid& grid);
FloatGrid tensor_to_grid(const Tensor4<float>& t);

}  // namespace reface
