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

#include "reface/networks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace reface {

namespace {

constexpr ConvGeometry kResidualGeometry{3, 1, 1};
constexpr ConvGeometry kDiscDown{4, 2, 1};
constexpr ConvGeometry kDiscHead{3, 1, 1};

std::string enc_name(int i) { return "gen.enc" + std::to_string(i) + ".weight"; }
std::string res_name(int r, int conv) {
  return "gen.res" + std::to_string(r) + ".conv" + std::to_string(conv) + ".weight";
}
std::string dec_name(int i) { return "gen.dec" + std::to_string(i) + ".weight"; }
std::string disc_name(int i) { return "disc.layer" + std::to_string(i) + ".weight"; }

std::vector<int> kernel_shape(int a, int b, int k) { return {a, b, k, k, k}; }

template <typename T>
void add_into(Tensor4<T>& acc, const Tensor4<T>& other) {
  require_same_shape(acc, other, "add");
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += other.data[i];
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (levels < 1) fail(ErrorCode::InvalidArgument, "generator levels must be >= 1");
  if (levels > 10) fail(ErrorCode::InvalidArgument, "generator levels must be <= 10");
  if (base_channels < 1) fail(ErrorCode::InvalidArgument, "generator base_channels must be >= 1");
  if (bottleneck_res_blocks < 0) fail(ErrorCode::InvalidArgument, "bottleneck_res_blocks must be >= 0");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail(ErrorCode::InvalidArgument, "dropout_p must lie in [0, 1)");
  if (kernel < 2 || kernel % 2 != 0) fail(ErrorCode::InvalidArgument, "generator kernel must be even and >= 2");
  if (norm != "instance") fail(ErrorCode::InvalidArgument, "unsupported normalization: " + norm);
}

void DiscriminatorConfig::validate() const {
  if (layers < 1) fail(ErrorCode::InvalidArgument, "discriminator layers must be >= 1");
  if (base_channels < 1) fail(ErrorCode::InvalidArgument, "discriminator base_channels must be >= 1");
  if (!patch_output) fail(ErrorCode::InvalidArgument, "only patch output is supported");
}

std::size_t ParamSpec::count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

std::vector<ParamSpec> generator_parameter_specs(const GeneratorConfig& cfg) {
  cfg.validate();
  const int L = cfg.levels, k = cfg.kernel;
  std::vector<ParamSpec> specs;
  for (int i = 0; i < L; ++i) {
    specs.push_back({enc_name(i), kernel_shape(cfg.level_channels(i), i == 0 ? 1 : cfg.level_channels(i - 1), k)});
  }
  const int bottleneck = cfg.level_channels(L - 1);
  for (int r = 0; r < cfg.bottleneck_res_blocks; ++r) {
    specs.push_back({res_name(r, 1), kernel_shape(bottleneck, bottleneck, 3)});
    specs.push_back({res_name(r, 2), kernel_shape(bottleneck, bottleneck, 3)});
  }
  for (int i = L - 1; i >= 1; --i) {
    const int in = i == L - 1 ? bottleneck : 2 * cfg.level_channels(i);
    specs.push_back({dec_name(i), kernel_shape(in, cfg.level_channels(i - 1), k)});
  }
  specs.push_back({"gen.out.weight", kernel_shape(L == 1 ? cfg.base_channels : 2 * cfg.base_channels, 1, k)});
  specs.push_back({"gen.out.bias", {1}});
  return specs;
}

std::vector<ParamSpec> discriminator_parameter_specs(const DiscriminatorConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> specs;
  for (int i = 0; i < cfg.layers; ++i) {
    const int in = i == 0 ? 2 : cfg.base_channels << (i - 1);
    specs.push_back({disc_name(i), kernel_shape(cfg.base_channels << i, in, kDiscDown.kernel)});
  }
  specs.push_back({"disc.out.weight", kernel_shape(1, cfg.base_channels << (cfg.layers - 1), kDiscHead.kernel)});
  specs.push_back({"disc.out.bias", {1}});
  return specs;
}

template <typename T>
void ParameterSet<T>::add(const ParamSpec& spec, std::vector<T> value) {
  if (value.size() != spec.count()) fail(ErrorCode::ShapeMismatch, "parameter " + spec.name + ": size mismatch");
  Parameter<T> param{spec.shape, AlignedVector<T>(value.begin(), value.end()), {}};
  param.grad.assign(param.value.size(), T{0});
  params_[spec.name] = std::move(param);
}

template <typename T>
Parameter<T>& ParameterSet<T>::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) fail(ErrorCode::MissingTensor, "missing tensor: " + name);
  return it->second;
}

template <typename T>
const Parameter<T>& ParameterSet<T>::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) fail(ErrorCode::MissingTensor, "missing tensor: " + name);
  return it->second;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& [name, param] : params_) std::fill(param.grad.begin(), param.grad.end(), T{0});
}

template <typename T>
std::size_t ParameterSet<T>::total_count() const {
  std::size_t n = 0;
  for (const auto& [name, param] : params_) n += param.value.size();
  return n;
}

template <typename T>
ParameterSet<T> init_parameters(const std::vector<ParamSpec>& specs, Rng& rng) {
  ParameterSet<T> set;
  for (const ParamSpec& spec : specs) {
    std::vector<T> v(spec.count(), T{0});
    if (!ends_with(spec.name, ".bias")) {
      for (T& x : v) x = static_cast<T>(0.02 * rng.normal());
    }
    set.add(spec, std::move(v));
  }
  return set;
}

template <typename T>
Generator<T>::Generator(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

template <typename T>
ConvGeometry Generator<T>::down_geometry() const {
  return {cfg_.kernel, 2, (cfg_.kernel - 2) / 2};
}

template <typename T>
Tensor4<T> Generator<T>::forward(const Tensor4<T>& y, const ParameterSet<T>& p, Rng* rng,
                                 GeneratorCache<T>* cache) const {
  if (y.channels() != 1) fail(ErrorCode::ShapeMismatch, "generator expects a single-channel input");
  for (int a = 1; a < 4; ++a) {
    if (y.shape[a] < 1 || y.shape[a] % cfg_.divisor() != 0) {
      fail(ErrorCode::ShapeMismatch, "generator input dims must be divisible by " + std::to_string(cfg_.divisor()));
    }
  }
  const ConvGeometry down = down_geometry();
  const int L = cfg_.levels, R = cfg_.bottleneck_res_blocks;
  const bool use_dropout = rng != nullptr && cfg_.dropout_p > 0.0;
  if (cache) {
    cache->enc.assign(L, {});
    cache->res.assign(R, {});
    cache->dec.assign(L - 1, {});
  }

  std::vector<Tensor4<T>> skips(L);
  Tensor4<T> h = y;
  for (int i = 0; i < L; ++i) {
    Tensor4<T> z = conv3d<T>(h, p.value(enc_name(i)), {}, cfg_.level_channels(i), down);
    std::vector<T> inv;
    if (i > 0) z = instance_norm(z, &inv);
    Tensor4<T> e = leaky_relu(cache ? z : std::move(z));
    if (cache) {
      auto& c = cache->enc[i];
      c.input = std::move(h);
      c.normed = std::move(z);
      c.out = e;
      c.inv_std = std::move(inv);
    }
    if (i < L - 1) skips[i] = e;
    h = std::move(e);
  }

  const int bottleneck = cfg_.level_channels(L - 1);
  for (int r = 0; r < R; ++r) {
    std::vector<T> inv1, inv2, scale;
    Tensor4<T> n1 = instance_norm(conv3d<T>(h, p.value(res_name(r, 1)), {}, bottleneck, kResidualGeometry), &inv1);
    Tensor4<T> a1 = relu(cache ? n1 : std::move(n1));
    Tensor4<T> n2 = instance_norm(conv3d<T>(a1, p.value(res_name(r, 2)), {}, bottleneck, kResidualGeometry), &inv2);
    Tensor4<T> out = h;
    add_into(out, n2);
    const bool drop = use_dropout && r < R - 1;
    if (drop) out = dropout(std::move(out), cfg_.dropout_p, *rng, cache ? &scale : nullptr);
    if (cache) {
      auto& c = cache->res[r];
      c.input = std::move(h);
      c.normed1 = std::move(n1);
      c.act1 = std::move(a1);
      c.normed2 = std::move(n2);
      c.inv_std1 = std::move(inv1);
      c.inv_std2 = std::move(inv2);
      c.drop_scale = std::move(scale);
      c.dropped = drop;
    }
    h = std::move(out);
  }

  for (int i = L - 1; i >= 1; --i) {
    std::vector<T> inv;
    Tensor4<T> n =
        instance_norm(conv_transpose3d<T>(h, p.value(dec_name(i)), {}, cfg_.level_channels(i - 1), down), &inv);
    Tensor4<T> a = relu(cache ? n : std::move(n));
    Tensor4<T> next = concat_channels(a, skips[i - 1]);
    skips[i - 1] = {};
    if (cache) {
      auto& c = cache->dec[L - 1 - i];
      c.input = std::move(h);
      c.normed = std::move(n);
      c.out = std::move(a);
      c.inv_std = std::move(inv);
    }
    h = std::move(next);
  }

  Tensor4<T> out = tanh_act(conv_transpose3d<T>(h, p.value("gen.out.weight"), p.value("gen.out.bias"), 1, down));
  if (cache) {
    cache->head_input = std::move(h);
    cache->output = out;
  }
  return out;
}

template <typename T>
Tensor4<T> Generator<T>::backward(const GeneratorCache<T>& cache, ParameterSet<T>& p,
                                  const Tensor4<T>& grad_out) const {
  const ConvGeometry down = down_geometry();
  const int L = cfg_.levels, R = cfg_.bottleneck_res_blocks;
  if (static_cast<int>(cache.enc.size()) != L || static_cast<int>(cache.res.size()) != R) {
    fail(ErrorCode::InvalidArgument, "generator backward: cache does not match the configuration");
  }

  Tensor4<T> g = tanh_backward(cache.output, grad_out);
  Tensor4<T> grad_h = conv_transpose3d_backward<T>(cache.head_input, p.value("gen.out.weight"), 1, down, g,
                                                   p.grad("gen.out.weight"), p.grad("gen.out.bias"));

  std::vector<Tensor4<T>> skip_grads(L);
  for (int i = 1; i <= L - 1; ++i) {
    const auto& c = cache.dec[L - 1 - i];
    const int ca = cfg_.level_channels(i - 1);
    skip_grads[i - 1] = slice_channels(grad_h, ca, ca);
    g = relu_backward(c.out, slice_channels(grad_h, 0, ca));
    g = instance_norm_backward(c.normed, c.inv_std, g);
    grad_h = conv_transpose3d_backward<T>(c.input, p.value(dec_name(i)), ca, down, g, p.grad(dec_name(i)), {});
  }

  const int bottleneck = cfg_.level_channels(L - 1);
  for (int r = R - 1; r >= 0; --r) {
    const auto& c = cache.res[r];
    if (c.dropped) grad_h = dropout_backward(c.drop_scale, std::move(grad_h));
    g = instance_norm_backward(c.normed2, c.inv_std2, grad_h);
    g = conv3d_backward<T>(c.act1, p.value(res_name(r, 2)), bottleneck, kResidualGeometry, g,
                           p.grad(res_name(r, 2)), {});
    g = relu_backward(c.act1, std::move(g));
    g = instance_norm_backward(c.normed1, c.inv_std1, g);
    g = conv3d_backward<T>(c.input, p.value(res_name(r, 1)), bottleneck, kResidualGeometry, g,
                           p.grad(res_name(r, 1)), {});
    add_into(grad_h, g);
  }

  for (int i = L - 1; i >= 0; --i) {
    const auto& c = cache.enc[i];
    if (i < L - 1) add_into(grad_h, skip_grads[i]);
    g = leaky_relu_backward(c.out, std::move(grad_h));
    if (i > 0) g = instance_norm_backward(c.normed, c.inv_std, g);
    grad_h = conv3d_backward<T>(c.input, p.value(enc_name(i)), cfg_.level_channels(i), down, g,
                                p.grad(enc_name(i)), {});
  }
  return grad_h;
}

template <typename T>
Discriminator<T>::Discriminator(DiscriminatorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

template <typename T>
Tensor4<T> Discriminator<T>::forward(const Tensor4<T>& x, const Tensor4<T>& y, const ParameterSet<T>& p,
                                     DiscriminatorCache<T>* cache) const {
  if (x.shape != y.shape || x.channels() != 1) {
    fail(ErrorCode::ShapeMismatch, "discriminator expects two single-channel tensors of equal shape");
  }
  if (cache) {
    cache->layers.assign(cfg_.layers, {});
    cache->x_channels = x.channels();
  }
  Tensor4<T> h = concat_channels(x, y);
  for (int i = 0; i < cfg_.layers; ++i) {
    Tensor4<T> z = conv3d<T>(h, p.value(disc_name(i)), {}, cfg_.base_channels << i, kDiscDown);
    std::vector<T> inv;
    if (i > 0) z = instance_norm(z, &inv);
    Tensor4<T> a = leaky_relu(cache ? z : std::move(z));
    if (cache) {
      auto& c = cache->layers[i];
      c.input = std::move(h);
      c.normed = std::move(z);
      c.out = a;
      c.inv_std = std::move(inv);
    }
    h = std::move(a);
  }
  Tensor4<T> out = sigmoid(conv3d<T>(h, p.value("disc.out.weight"), p.value("disc.out.bias"), 1, kDiscHead));
  if (cache) {
    cache->head_input = std::move(h);
    cache->output = out;
  }
  return out;
}

template <typename T>
Tensor4<T> Discriminator<T>::backward(const DiscriminatorCache<T>& cache, ParameterSet<T>& p,
                                      const Tensor4<T>& grad_out) const {
  if (static_cast<int>(cache.layers.size()) != cfg_.layers) {
    fail(ErrorCode::InvalidArgument, "discriminator backward: cache does not match the configuration");
  }
  Tensor4<T> g = sigmoid_backward(cache.output, grad_out);
  Tensor4<T> grad_h = conv3d_backward<T>(cache.head_input, p.value("disc.out.weight"), 1, kDiscHead, g,
                                         p.grad("disc.out.weight"), p.grad("disc.out.bias"));
  for (int i = cfg_.layers - 1; i >= 0; --i) {
    const auto& c = cache.layers[i];
    g = leaky_relu_backward(c.out, std::move(grad_h));
    if (i > 0) g = instance_norm_backward(c.normed, c.inv_std, g);
    grad_h = conv3d_backward<T>(c.input, p.value(disc_name(i)), cfg_.base_channels << i, kDiscDown, g,
                                p.grad(disc_name(i)), {});
  }
  return slice_channels(grad_h, 0, cache.x_channels);
}

#define REFACE_INSTANTIATE_NETWORKS(T)                                                      \
  template class ParameterSet<T>;                                                           \
  template ParameterSet<T> init_parameters<T>(const std::vector<ParamSpec>&, Rng&);         \
  template class Generator<T>;                                                              \
  template class Discriminator<T>;

REFACE_INSTANTIATE_NETWORKS(float)
REFACE_INSTANTIATE_NETWORKS(double)

}  // namespace reface
