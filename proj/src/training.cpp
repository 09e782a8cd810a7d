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

#include "reface/training.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "reface/losses.hpp"
#include "reface/reface.hpp"

namespace reface {

using nlohmann::json;

namespace {

constexpr std::uint64_t kGeneratorInitStream = 0;
constexpr std::uint64_t kDiscriminatorInitStream = 1;
constexpr std::uint64_t kDropoutStream = 2;
constexpr std::uint64_t kShuffleStreamBase = 100;

json schedule_json(const TrainSchedule& s) {
  return {{"epochs", s.epochs},
          {"validate_every", s.validate_every},
          {"base_lr", s.base_lr},
          {"cosine_decay_period", s.cosine_decay_period},
          {"lambda", s.lambda},
          {"seed", s.seed}};
}

}  // namespace

void TrainSchedule::validate() const {
  if (epochs < 1) fail(ErrorCode::InvalidArgument, "epochs must be positive");
  if (validate_every < 1) fail(ErrorCode::InvalidArgument, "validate_every must be positive");
  if (!(base_lr > 0.0)) fail(ErrorCode::InvalidArgument, "base_lr must be positive");
  if (cosine_decay_period < 1) fail(ErrorCode::InvalidArgument, "cosine_decay_period must be positive");
  if (!(lambda > 0.0)) fail(ErrorCode::InvalidArgument, "lambda must be positive");
}

double cosine_lr(std::int64_t step, const TrainSchedule& schedule) {
  if (step < 0) fail(ErrorCode::InvalidArgument, "cosine_lr: negative step");
  const auto period = static_cast<std::int64_t>(schedule.cosine_decay_period);
  const double phase = static_cast<double>(step % period) / static_cast<double>(period);
  return schedule.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

std::vector<TilePair> prepare_training_tiles(const std::vector<TrainingPair>& pairs, const Dims3& tile_shape,
                                             double cap_percentile, double* cap_out) {
  if (pairs.empty()) fail(ErrorCode::EmptyInput, "training requires at least one image pair");
  std::vector<double> maxima;
  for (const TrainingPair& p : pairs) {
    require_same_dims(p.defaced.data, p.original.data, "training pair");
    if (p.original.size() == 0) fail(ErrorCode::EmptyInput, "empty training image");
    maxima.push_back(*std::max_element(p.original.data.data.begin(), p.original.data.data.end()));
  }
  const double cap = compute_cap(maxima, cap_percentile);
  if (cap_out) *cap_out = cap;

  std::vector<TilePair> tiles;
  for (const TrainingPair& p : pairs) {
    const NiftiImage original = winsorize(p.original, cap);
    const NiftiImage defaced = winsorize(p.defaced, cap);
    const ScaleCoeffs coeffs = fit_scale(original);
    const TilePlan plan = plan_tiles(original.dims(), tile_shape);
    const auto pad = static_cast<float>(coeffs.apply(0.0));
    const auto xs = split_tiles(apply_scale(original, coeffs).data, plan, pad);
    const auto ys = split_tiles(apply_scale(defaced, coeffs).data, plan, pad);
    for (std::size_t i = 0; i < xs.size(); ++i) tiles.push_back({grid_to_tensor(xs[i]), grid_to_tensor(ys[i])});
  }
  return tiles;
}

GanTrainer::GanTrainer(GeneratorConfig gcfg, DiscriminatorConfig dcfg, TrainSchedule schedule)
    : gen_(std::move(gcfg)),
      disc_(std::move(dcfg)),
      schedule_(schedule),
      dropout_rng_(Rng::derive(schedule.seed, kDropoutStream)) {
  schedule_.validate();
  Rng gen_init(Rng::derive(schedule_.seed, kGeneratorInitStream));
  Rng disc_init(Rng::derive(schedule_.seed, kDiscriminatorInitStream));
  gen_params_ = init_parameters<float>(gen_.parameter_specs(), gen_init);
  disc_params_ = init_parameters<float>(disc_.parameter_specs(), disc_init);
}

LossRecord GanTrainer::step(const TilePair& tile, int epoch) {
  const double lr = cosine_lr(step_, schedule_);
  GeneratorCache<float> gen_cache;
  Tensor4<float> fake = gen_.forward(tile.y, gen_params_, &dropout_rng_, &gen_cache);

  disc_params_.zero_grad();
  DiscriminatorCache<float> real_cache, fake_cache;
  const Tensor4<float> d_real = disc_.forward(tile.x, tile.y, disc_params_, &real_cache);
  const Tensor4<float> d_fake = disc_.forward(fake, tile.y, disc_params_, &fake_cache);
  const AdversarialLosses d_losses = adversarial_losses(d_real, d_fake, tile.x, fake, schedule_.lambda);
  disc_.backward(real_cache, disc_params_, bce_grad(d_real, true));
  disc_.backward(fake_cache, disc_params_, bce_grad(d_fake, false));
  disc_opt_.step(disc_params_, lr);

  DiscriminatorCache<float> gen_view;
  const Tensor4<float> d_fake_after = disc_.forward(fake, tile.y, disc_params_, &gen_view);
  const AdversarialLosses g_losses = adversarial_losses(d_real, d_fake_after, tile.x, fake, schedule_.lambda);
  gen_params_.zero_grad();
  Tensor4<float> grad = disc_.backward(gen_view, disc_params_, bce_grad(d_fake_after, true));
  const Tensor4<float> l15 = l15_grad(tile.x, fake);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad.data[i] += static_cast<float>(schedule_.lambda) * l15.data[i];
  }
  gen_.backward(gen_cache, gen_params_, grad);
  gen_opt_.step(gen_params_, lr);
  disc_params_.zero_grad();

  LossRecord rec{step_, epoch, d_losses.loss_D, g_losses.loss_G, g_losses.l15, lr, g_losses.adversarial_G};
  ++step_;
  return rec;
}

ModelWeights GanTrainer::snapshot(const json& extra_metadata) const {
  ModelWeights w;
  store_parameters(gen_params_, w);
  store_parameters(disc_params_, w);
  w.metadata = extra_metadata.is_object() ? extra_metadata : json::object();
  w.metadata["generator"] = to_json(gen_.config());
  w.metadata["discriminator"] = to_json(disc_.config());
  w.metadata["schedule"] = schedule_json(schedule_);
  w.metadata["step"] = step_;
  return w;
}

TrainResult train(const std::vector<TrainingPair>& pairs, const GeneratorConfig& gcfg,
                  const DiscriminatorConfig& dcfg, const TrainSchedule& schedule, const TrainOptions& options) {
  schedule.validate();
  gcfg.validate();
  for (auto extent : options.tile_shape) {
    if (extent % gcfg.divisor() != 0) {
      fail(ErrorCode::ShapeMismatch, "tile shape must be divisible by " + std::to_string(gcfg.divisor()));
    }
  }
  TrainResult result;
  const std::vector<TilePair> tiles =
      prepare_training_tiles(pairs, options.tile_shape, options.cap_percentile, &result.winsorize_cap);

  GanTrainer trainer(gcfg, dcfg, schedule);
  json meta;
  meta["winsorize_cap"] = result.winsorize_cap;
  meta["cap_percentile"] = options.cap_percentile;
  meta["tile_shape"] = options.tile_shape;
  meta["seed_lineage"] = {{"seed", schedule.seed},
                          {"generator_init_stream", kGeneratorInitStream},
                          {"discriminator_init_stream", kDiscriminatorInitStream},
                          {"dropout_stream", kDropoutStream},
                          {"shuffle_stream_base", kShuffleStreamBase}};

  auto emit = [&](int epoch, std::string name) {
    json m = meta;
    m["epoch"] = epoch;
    Checkpoint cp{epoch, std::move(name), trainer.snapshot(m)};
    if (options.on_checkpoint) {
      options.on_checkpoint(cp);
    } else {
      result.checkpoints.push_back(std::move(cp));
    }
  };

  std::vector<std::size_t> order(tiles.size());
  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(Rng::derive(schedule.seed, kShuffleStreamBase + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    for (std::size_t idx : order) {
      LossRecord rec = trainer.step(tiles[idx], epoch);
      if (options.on_step) options.on_step(rec);
      result.log.push_back(rec);
    }
    if (epoch % schedule.validate_every == 0) emit(epoch, "gen_epoch" + std::to_string(epoch));
  }
  json m = meta;
  m["epoch"] = schedule.epochs;
  result.final_weights = trainer.snapshot(m);
  Checkpoint final_cp{schedule.epochs, "gen_final", result.final_weights};
  if (options.on_checkpoint) {
    options.on_checkpoint(final_cp);
  } else {
    result.checkpoints.push_back(std::move(final_cp));
  }
  return result;
}

std::string loss_log_csv(const std::vector<LossRecord>& log) {
  std::string out = "step,loss_D,loss_G,l15,lr\n";
  char line[160];
  for (const LossRecord& r : log) {
    std::snprintf(line, sizeof line, "%lld,%.10g,%.10g,%.10g,%.10g\n", static_cast<long long>(r.step), r.loss_D,
                  r.loss_G, r.l15, r.lr);
    out += line;
  }
  return out;
}

}  // namespace reface
