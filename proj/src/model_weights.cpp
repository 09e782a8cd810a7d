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

#include "reface/model_weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace reface {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'R', 'F', 'K', 'W'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t s : shape) {
    if (s < 0) fail(ErrorCode::ParseError, "negative tensor extent");
    n *= s;
  }
  return n;
}

}  // namespace

const WeightTensor& ModelWeights::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) fail(ErrorCode::MissingTensor, "missing tensor: " + name);
  return it->second;
}

std::vector<std::uint8_t> encode_weights(const ModelWeights& w) {
  json index;
  index["metadata"] = w.metadata;
  index["tensors"] = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : w.tensors) {
    if (static_cast<std::int64_t>(t.values.size()) != element_count(t.shape)) {
      fail(ErrorCode::ShapeMismatch, "tensor " + name + ": value count does not match shape");
    }
    const std::uint64_t length = t.values.size() * sizeof(float);
    index["tensors"][name] = {{"dtype", "float32"}, {"shape", t.shape}, {"offset", offset}, {"length", length}};
    offset += length;
  }
  const std::string text = index.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kWeightsVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : w.tensors) {
    for (float v : t.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

ModelWeights decode_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16) fail(ErrorCode::TruncatedFile, "weights file shorter than its preamble");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail(ErrorCode::ParseError, "not a weights file (bad magic)");
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kWeightsVersion) fail(ErrorCode::ParseError, "unsupported weights version " + std::to_string(version));
  const auto index_len = get_le<std::uint64_t>(bytes.data() + 8);
  if (index_len > bytes.size() - 16) fail(ErrorCode::TruncatedFile, "weights index extends past end of file");
  const std::size_t payload = 16 + static_cast<std::size_t>(index_len);

  json index;
  try {
    index = json::parse(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(payload));
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("weights index: ") + e.what());
  }
  if (!index.is_object() || !index.contains("tensors") || !index["tensors"].is_object()) {
    fail(ErrorCode::ParseError, "weights index lacks a tensor table");
  }

  ModelWeights w;
  if (index.contains("metadata")) w.metadata = index["metadata"];
  try {
    for (const auto& [name, entry] : index["tensors"].items()) {
      if (entry.value("dtype", "") != "float32") fail(ErrorCode::UnsupportedDatatype, "tensor " + name + ": dtype");
      WeightTensor t;
      t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto length = entry.at("length").get<std::uint64_t>();
      const auto count = static_cast<std::uint64_t>(element_count(t.shape));
      if (length != count * sizeof(float)) fail(ErrorCode::ParseError, "tensor " + name + ": length/shape mismatch");
      if (offset > bytes.size() - payload || length > bytes.size() - payload - offset) {
        fail(ErrorCode::TruncatedFile, "tensor " + name + " extends past end of file");
      }
      t.values.resize(count);
      const std::uint8_t* p = bytes.data() + payload + offset;
      for (std::uint64_t i = 0; i < count; ++i) t.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i));
      w.tensors.emplace(name, std::move(t));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("weights index: ") + e.what());
  }
  return w;
}

void write_weights(const ModelWeights& w, const std::filesystem::path& path) {
  const auto bytes = encode_weights(w);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorCode::IoError, "failed writing " + path.string());
}

ModelWeights read_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

template <typename T>
ParameterSet<T> to_parameters(const ModelWeights& w, const std::vector<ParamSpec>& specs) {
  ParameterSet<T> set;
  for (const ParamSpec& spec : specs) {
    const WeightTensor& t = w.at(spec.name);
    if (t.shape.size() != spec.shape.size() || !std::equal(t.shape.begin(), t.shape.end(), spec.shape.begin())) {
      fail(ErrorCode::ShapeMismatch, "tensor " + spec.name + " has the wrong shape for this configuration");
    }
    set.add(spec, std::vector<T>(t.values.begin(), t.values.end()));
  }
  return set;
}

template <typename T>
void store_parameters(const ParameterSet<T>& params, ModelWeights& w) {
  for (const auto& [name, param] : params.entries()) {
    WeightTensor t;
    t.shape.assign(param.shape.begin(), param.shape.end());
    t.values.assign(param.value.begin(), param.value.end());
    w.tensors[name] = std::move(t);
  }
}

json to_json(const GeneratorConfig& cfg) {
  return {{"levels", cfg.levels},
          {"base_channels", cfg.base_channels},
          {"bottleneck_res_blocks", cfg.bottleneck_res_blocks},
          {"dropout_p", cfg.dropout_p},
          {"kernel", cfg.kernel},
          {"norm", cfg.norm}};
}

json to_json(const DiscriminatorConfig& cfg) {
  return {{"layers", cfg.layers}, {"base_channels", cfg.base_channels}, {"patch_output", cfg.patch_output}};
}

GeneratorConfig generator_config_from_json(const json& j, GeneratorConfig fallback) {
  if (!j.is_object()) return fallback;
  GeneratorConfig c = fallback;
  c.levels = j.value("levels", c.levels);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.bottleneck_res_blocks = j.value("bottleneck_res_blocks", c.bottleneck_res_blocks);
  c.dropout_p = j.value("dropout_p", c.dropout_p);
  c.kernel = j.value("kernel", c.kernel);
  c.norm = j.value("norm", c.norm);
  c.validate();
  return c;
}

DiscriminatorConfig discriminator_config_from_json(const json& j, DiscriminatorConfig fallback) {
  if (!j.is_object()) return fallback;
  DiscriminatorConfig c = fallback;
  c.layers = j.value("layers", c.layers);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.patch_output = j.value("patch_output", c.patch_output);
  c.validate();
  return c;
}

template ParameterSet<float> to_parameters<float>(const ModelWeights&, const std::vector<ParamSpec>&);
template ParameterSet<double> to_parameters<double>(const ModelWeights&, const std::vector<ParamSpec>&);
template void store_parameters<float>(const ParameterSet<float>&, ModelWeights&);
template void store_parameters<double>(const ParameterSet<double>&, ModelWeights&);

}  // namespace reface
