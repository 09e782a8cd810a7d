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
#include <functional>
#include <string>
#include <vector>

#include "reface/model_weights.hpp"
#include "reface/networks.hpp"
#include "reface/nifti.hpp"
#include "reface/optimizer.hpp"
#include "reface/volume_ops.hpp"

namespace reface {

struct TrainSchedule {
  int epochs = 50;
  int validate_every = 7;
  double base_lr = 0.0002;
  int cosine_decay_period = 1000;
  double lambda = 0.015;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Cosine decay that restarts every cosine_decay_period iterations.
double cosine_lr(std::int64_t step, const TrainSchedule& schedule);

struct TrainingPair {
  NiftiImage defaced;
  NiftiImage original;
};

struct LossRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double loss_D = 0.0;
  double loss_G = 0.0;
  double l15 = 0.0;
  double lr = 0.0;
  double adversarial_G = 0.0;  // loss_G without the weighted l15 term
};

struct Checkpoint {
  int epoch = 0;
  std::string name;  // "gen_epoch{k}" or "gen_final"
  ModelWeights weights;
};

struct TrainOptions {
  Dims3 tile_shape{128, 128, 128};
  double cap_percentile = 80.0;
  /// Invoked for each checkpoint; when unset, checkpoints are kept in the result.
  std::function<void(const Checkpoint&)> on_checkpoint;
  /// Invoked after every iteration.
  std::function<void(const LossRecord&)> on_step;
};

struct TrainResult {
  std::vector<LossRecord> log;
  std::vector<Checkpoint> checkpoints;
  ModelWeights final_weights;
  double winsorize_cap = 0.0;
};

/// Tiles already scaled to [-1, 1]: x is the original, y the defaced condition.
struct TilePair {
  Tensor4<float> x;
  Tensor4<float> y;
};

/// Winsorizes with the percentile cap of the originals' maxima, scales both
/// images with coefficients fitted on the original, and tiles them.
std::vector<TilePair> prepare_training_tiles(const std::vector<TrainingPair>& pairs, const Dims3& tile_shape,
                                             double cap_percentile, double* cap_out = nullptr);

/// One alternating discriminator/generator update per call.
class GanTrainer {
 public:
  GanTrainer(GeneratorConfig gcfg, DiscriminatorConfig dcfg, TrainSchedule schedule);

  LossRecord step(const TilePair& tile, int epoch);

  std::int64_t steps() const { return step_; }
  const ParameterSet<float>& generator_params() const { return gen_params_; }
  const ParameterSet<float>& discriminator_params() const { return disc_params_; }
  ModelWeights snapshot(const nlohmann::json& extra_metadata) const;

 private:
  Generator<float> gen_;
  Discriminator<float> disc_;
  TrainSchedule schedule_;
  ParameterSet<float> gen_params_, disc_params_;
  Adam<float> gen_opt_, disc_opt_;
  Rng dropout_rng_;
  std::int64_t step_ = 0;
};

TrainResult train(const std::vector<TrainingPair>& pairs, const GeneratorConfig& gcfg,
                  const DiscriminatorConfig& dcfg, const TrainSchedule& schedule, const TrainOptions& options = {});

/// CSV with columns step,loss_D,loss_G,l15,lr.
std::string loss_log_csv(const std::vector<LossRecord>& log);

}  // namespace reface
