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
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "reface/networks.hpp"

namespace reface {

inline constexpr std::uint32_t kWeightsVersion = 1;

struct WeightTensor {
  std::vector<std::int64_t> shape;
  std::vector<float> values;
};

/// Named float32 tensors plus a JSON metadata block.
///
/// File layout: "RFKW", u32 version, u64 index length, JSON index, payload.
/// All integers and payload values are little-endian.
struct ModelWeights {
  std::map<std::string, WeightTensor> tensors;
  nlohmann::json metadata = nlohmann::json::object();

  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
  const WeightTensor& at(const std::string& name) const;
};

std::vector<std::uint8_t> encode_weights(const ModelWeights& w);
ModelWeights decode_weights(const std::vector<std::uint8_t>& bytes);
void write_weights(const ModelWeights& w, const std::filesystem::path& path);
ModelWeights read_weights(const std::filesystem::path& path);

/// Extracts the tensors named by specs, checking shapes.
template <typename T>
ParameterSet<T> to_parameters(const ModelWeights& w, const std::vector<ParamSpec>& specs);

/// Copies every parameter into w (overwriting tensors of the same name).
template <typename T>
void store_parameters(const ParameterSet<T>& params, ModelWeights& w);

nlohmann::json to_json(const GeneratorConfig& cfg);
nlohmann::json to_json(const DiscriminatorConfig& cfg);
GeneratorConfig generator_config_from_json(const nlohmann::json& j, GeneratorConfig fallback = {});
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j, DiscriminatorConfig fallback = {});

}  // namespace reface
