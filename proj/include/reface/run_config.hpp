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
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "reface/grid.hpp"
#include "reface/networks.hpp"
#include "reface/reid.hpp"
#include "reface/training.hpp"

namespace reface {

/// Settings shared by the CLI commands. Loaded from an INI-style file:
///
///   [paths]          weights, report_dir
///   [reface]         dropout_p, seed, tile_shape, winsorize_cap, threads
///   [train]          epochs, validate_every, base_lr, cosine_decay_period,
///                    lambda, cap_percentile
///   [generator]      levels, base_channels, residual_blocks, kernel
///   [discriminator]  layers, base_channels
///   [report]         threshold, scale
///
/// `;` and `#` start comments. Relative paths resolve against the file's
/// directory. Unknown sections or keys are rejected.
struct RunConfig {
  std::optional<std::filesystem::path> weights;
  std::optional<std::filesystem::path> report_dir;
  double dropout_p = 0.25;
  std::uint64_t seed = 0;
  std::optional<Dims3> tile_shape;
  std::optional<double> winsorize_cap;
  int threads = 0;  // 0 = all logical cores
  double reid_threshold = kReidThreshold;
  DistanceScale scale = DistanceScale::Raw;
  double cap_percentile = 80.0;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  TrainSchedule schedule;

  void validate() const;
  int effective_threads() const;
  nlohmann::json to_json() const;
};

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// "128", "128,128,64" or "128x128x64".
Dims3 parse_dims(const std::string& text);

}  // namespace reface
