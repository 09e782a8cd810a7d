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

#include "reface/reface.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

namespace reface {

namespace {

class StageClock {
 public:
  explicit StageClock(StageTimings* sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}

  void lap(const char* stage) {
    const auto now = std::chrono::steady_clock::now();
    if (sink_) sink_->emplace_back(stage, std::chrono::duration<double>(now - start_).count());
    start_ = now;
  }

 private:
  StageTimings* sink_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

Tensor4<float> grid_to_tensor(const FloatGrid& grid) {
  Tensor4<float> t;
  t.shape = {1, static_cast<int>(grid.dims[2]), static_cast<int>(grid.dims[1]), static_cast<int>(grid.dims[0])};
  t.data.assign(grid.data.begin(), grid.data.end());
  return t;
}

FloatGrid tensor_to_grid(const Tensor4<float>& t) {
  if (t.channels() != 1) fail(ErrorCode::ShapeMismatch, "expected a single-channel tensor");
  FloatGrid g;
  g.dims = {t.width(), t.height(), t.depth()};
  g.data.assign(t.data.begin(), t.data.end());
  return g;
}

GeneratorConfig inference_config(const ModelWeights& w, const GeneratorConfig& fallback) {
  if (w.metadata.is_object() && w.metadata.contains("generator")) {
    return generator_config_from_json(w.metadata["generator"], fallback);
  }
  return fallback;
}

Tensor4<float> generator_forward(const Tensor4<float>& y, const ModelWeights& w, const GeneratorConfig& cfg,
                                 Rng* rng) {
  const Generator<float> gen(cfg);
  return gen.forward(y, to_parameters<float>(w, gen.parameter_specs()), rng);
}

Tensor4<float> discriminator_forward(const Tensor4<float>& x, const Tensor4<float>& y, const ModelWeights& w,
                                     const DiscriminatorConfig& cfg) {
  const Discriminator<float> disc(cfg);
  return disc.forward(x, y, to_parameters<float>(w, disc.parameter_specs()));
}

std::vector<FloatGrid> generate_tiles(const std::vector<FloatGrid>& tiles, const Generator<float>& gen,
                                      const ParameterSet<float>& params, std::uint64_t seed, int threads) {
  std::vector<FloatGrid> out(tiles.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < tiles.size(); i = next++) {
      try {
        Rng rng(Rng::derive(seed, i));
        out[i] = tensor_to_grid(gen.forward(grid_to_tensor(tiles[i]), params, &rng));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, threads));
  if (n == 1 || tiles.size() < 2) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(n, tiles.size()); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

NiftiImage reface_image(const NiftiImage& defaced, const ModelWeights& w, const GeneratorConfig& cfg,
                  const RefaceOptions& options, StageTimings* timings) {
  StageClock clock(timings);
  GeneratorConfig run_cfg = cfg;
  run_cfg.dropout_p = options.dropout_p;
  const Generator<float> gen(run_cfg);
  const ParameterSet<float> params = to_parameters<float>(w, gen.parameter_specs());

  std::optional<double> cap = options.winsorize_cap;
  if (!cap && w.metadata.contains("winsorize_cap")) cap = w.metadata["winsorize_cap"].get<double>();
  Dims3 tile{128, 128, 128};
  if (options.tile_shape) {
    tile = *options.tile_shape;
  } else if (w.metadata.contains("tile_shape")) {
    tile = w.metadata["tile_shape"].get<Dims3>();
  }
  for (auto extent : tile) {
    if (extent < 1 || extent % run_cfg.divisor() != 0) {
      fail(ErrorCode::ShapeMismatch, "tile shape must be divisible by " + std::to_string(run_cfg.divisor()));
    }
  }
  clock.lap("load");

  const NiftiImage clipped = cap ? winsorize(defaced, *cap) : defaced;
  const ScaleCoeffs coeffs = fit_scale(clipped);
  const TilePlan plan = plan_tiles(defaced.dims(), tile);
  const auto tiles = split_tiles(apply_scale(clipped, coeffs).data, plan, static_cast<float>(coeffs.apply(0.0)));
  clock.lap("preprocess");

  const auto generated = generate_tiles(tiles, gen, params, options.seed, options.threads);
  clock.lap("generate");

  const NiftiImage rescaled = invert_scale(defaced.with_data(recombine(generated, plan)), coeffs);
  NiftiImage out = composite_reface(defaced, rescaled, options.closing_radius, options.air_threshold);
  clock.lap("composite");
  return out;
}

}  // namespace reface
