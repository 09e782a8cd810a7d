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

#include <map>
#include <string>
#include <vector>

#include "reface/layers.hpp"
#include "reface/rng.hpp"
#include "reface/tensor.hpp"

namespace reface {

struct GeneratorConfig {
  int levels = 4;
  int base_channels = 32;
  int bottleneck_res_blocks = 4;
  double dropout_p = 0.25;
  int kernel = 4;
  std::string norm = "instance";

  void validate() const;
  /// Channel count produced by encoder level i.
  int level_channels(int i) const { return base_channels << i; }
  /// Spatial extents must be multiples of this.
  int divisor() const { return 1 << levels; }
};

struct DiscriminatorConfig {
  int layers = 3;
  int base_channels = 32;
  bool patch_output = true;

  void validate() const;
};

struct ParamSpec {
  std::string name;
  std::vector<int> shape;

  std::size_t count() const;
};

std::vector<ParamSpec> generator_parameter_specs(const GeneratorConfig& cfg);
std::vector<ParamSpec> discriminator_parameter_specs(const DiscriminatorConfig& cfg);

template <typename T>
struct Parameter {
  std::vector<int> shape;
  AlignedVector<T> value;
  AlignedVector<T> grad;
};

/// Named parameters with gradient buffers. Iteration order is by name.
template <typename T>
class ParameterSet {
 public:
  using Map = std::map<std::string, Parameter<T>>;

  void add(const ParamSpec& spec, std::vector<T> value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Parameter<T>& at(const std::string& name);
  const Parameter<T>& at(const std::string& name) const;
  std::span<const T> value(const std::string& name) const { return at(name).value; }
  std::span<T> grad(const std::string& name) { return at(name).grad; }
  void zero_grad();
  std::size_t total_count() const;

  Map& entries() { return params_; }
  const Map& entries() const { return params_; }

 private:
  Map params_;
};

/// Weights drawn from N(0, 0.02); biases start at zero.
template <typename T>
ParameterSet<T> init_parameters(const std::vector<ParamSpec>& specs, Rng& rng);

/// Intermediate activations kept by a forward pass for the backward pass.
template <typename T>
struct GeneratorCache {
  struct Encoder {
    Tensor4<T> input, normed, out;
    std::vector<T> inv_std;
  };
  struct Residual {
    Tensor4<T> input, normed1, act1, normed2;
    std::vector<T> inv_std1, inv_std2, drop_scale;
    bool dropped = false;
  };
  struct Decoder {
    Tensor4<T> input, normed, out;
    std::vector<T> inv_std;
  };
  std::vector<Encoder> enc;
  std::vector<Residual> res;
  std::vector<Decoder> dec;  // ordered as executed (deepest first)
  Tensor4<T> head_input, output;
};

/// 3D U-Net with a residual bottleneck and dropout between residual blocks.
template <typename T>
class Generator {
 public:
  explicit Generator(GeneratorConfig cfg);

  const GeneratorConfig& config() const { return cfg_; }
  std::vector<ParamSpec> parameter_specs() const { return generator_parameter_specs(cfg_); }

  /// Dropout is active only when rng is given and dropout_p > 0.
  Tensor4<T> forward(const Tensor4<T>& y, const ParameterSet<T>& p, Rng* rng,
                     GeneratorCache<T>* cache = nullptr) const;
  /// Accumulates parameter gradients into p; returns the gradient w.r.t. the input.
  Tensor4<T> backward(const GeneratorCache<T>& cache, ParameterSet<T>& p, const Tensor4<T>& grad_out) const;

 private:
  ConvGeometry down_geometry() const;
  GeneratorConfig cfg_;
};

template <typename T>
struct DiscriminatorCache {
  struct Layer {
    Tensor4<T> input, normed, out;
    std::vector<T> inv_std;
  };
  std::vector<Layer> layers;
  Tensor4<T> head_input, output;
  int x_channels = 0;
};

/// PatchGAN discriminator on the channel concatenation [x, y].
template <typename T>
class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig cfg);

  const DiscriminatorConfig& config() const { return cfg_; }
  std::vector<ParamSpec> parameter_specs() const { return discriminator_parameter_specs(cfg_); }

  Tensor4<T> forward(const Tensor4<T>& x, const Tensor4<T>& y, const ParameterSet<T>& p,
                     DiscriminatorCache<T>* cache = nullptr) const;
  /// Accumulates parameter gradients into p; returns the gradient w.r.t. x.
  Tensor4<T> backward(const DiscriminatorCache<T>& cache, ParameterSet<T>& p, const Tensor4<T>& grad_out) const;

 private:
  DiscriminatorConfig cfg_;
};

}  // namespace reface
