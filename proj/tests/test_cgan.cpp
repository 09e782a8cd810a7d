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

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include "reface/losses.hpp"
#include "reface/optimizer.hpp"
#include "reface/phantom.hpp"
#include "reface/reface.hpp"
#include "reface/training.hpp"
#include "support/gradcheck.hpp"

using namespace reface;

namespace {

GeneratorConfig toy_generator(int levels = 2, int base = 4) {
  GeneratorConfig c;
  c.levels = levels;
  c.base_channels = base;
  c.bottleneck_res_blocks = 2;
  return c;
}

DiscriminatorConfig toy_discriminator() {
  DiscriminatorConfig c;
  c.layers = 3;
  c.base_channels = 4;
  return c;
}

template <typename T>
Tensor4<T> random_input(std::array<int, 4> shape, std::uint64_t seed, double amplitude = 1.0) {
  Rng rng(seed);
  Tensor4<T> t(shape);
  for (T& v : t.data) v = static_cast<T>(amplitude * (2.0 * rng.uniform() - 1.0));
  return t;
}

ModelWeights random_weights(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  Rng rng(seed);
  ModelWeights w;
  store_parameters(init_parameters<float>(specs, rng), w);
  return w;
}

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

std::vector<TrainingPair> toy_pairs() {
  std::vector<TrainingPair> pairs;
  for (std::uint64_t s = 0; s < 2; ++s) {
    HeadPhantom p = make_head_phantom({16, 16, 16}, s + 1);
    pairs.push_back({p.defaced, p.original});
  }
  return pairs;
}

}  // namespace

TEST(Generator, ToyShapeAndRange) {
  const GeneratorConfig cfg = toy_generator();
  const ModelWeights w = random_weights(generator_parameter_specs(cfg), 1);
  const auto y = random_input<float>({1, 16, 16, 16}, 2);
  const Tensor4<float> out = generator_forward(y, w, cfg);
  EXPECT_EQ(out.shape, y.shape);
  for (float v : out.data) EXPECT_LE(std::abs(v), 1.0f);
}

TEST(Generator, ShapeInvarianceForDivisibleDims) {
  const GeneratorConfig cfg = toy_generator();
  const ModelWeights w = random_weights(generator_parameter_specs(cfg), 1);
  for (auto shape : {std::array<int, 4>{1, 8, 12, 16}, std::array<int, 4>{1, 4, 4, 20}}) {
    EXPECT_EQ(generator_forward(random_input<float>(shape, 3), w, cfg).shape, shape);
  }
}

TEST(Generator, SeededDropoutIsDeterministic) {
  const GeneratorConfig cfg = toy_generator();
  const ModelWeights w = random_weights(generator_parameter_specs(cfg), 1);
  const auto y = random_input<float>({1, 16, 16, 16}, 2);
  Rng a(7), b(7), c(8);
  const auto ya = generator_forward(y, w, cfg, &a);
  EXPECT_EQ(ya.data, generator_forward(y, w, cfg, &b).data);
  EXPECT_GT(max_abs_diff(ya.data, generator_forward(y, w, cfg, &c).data), 0.0);
  EXPECT_EQ(generator_forward(y, w, cfg).data, generator_forward(y, w, cfg).data);
}

TEST(Generator, RejectsIndivisibleDims) {
  const GeneratorConfig cfg = toy_generator();
  const ModelWeights w = random_weights(generator_parameter_specs(cfg), 1);
  try {
    generator_forward(random_input<float>({1, 16, 16, 10}, 1), w, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Generator, MissingWeightIsReported) {
  const GeneratorConfig cfg = toy_generator();
  ModelWeights w = random_weights(generator_parameter_specs(cfg), 1);
  w.tensors.erase("gen.res1.conv2.weight");
  try {
    generator_forward(random_input<float>({1, 16, 16, 16}, 1), w, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingTensor);
    EXPECT_NE(std::string(e.what()).find("gen.res1.conv2.weight"), std::string::npos);
  }
}

TEST(Generator, ConfigValidation) {
  GeneratorConfig c;
  c.levels = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.dropout_p = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.base_channels = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_NO_THROW(GeneratorConfig{}.validate());
}

TEST(Generator, DefaultArchitectureChannels) {
  const auto specs = generator_parameter_specs(GeneratorConfig{});
  std::map<std::string, std::vector<int>> shapes;
  for (const auto& s : specs) shapes[s.name] = s.shape;
  EXPECT_EQ(shapes["gen.enc0.weight"], (std::vector<int>{32, 1, 4, 4, 4}));
  EXPECT_EQ(shapes["gen.enc3.weight"], (std::vector<int>{256, 128, 4, 4, 4}));
  EXPECT_EQ(shapes["gen.res3.conv2.weight"], (std::vector<int>{256, 256, 3, 3, 3}));
  EXPECT_EQ(shapes["gen.dec3.weight"], (std::vector<int>{256, 128, 4, 4, 4}));
  EXPECT_EQ(shapes["gen.dec1.weight"], (std::vector<int>{128, 32, 4, 4, 4}));
  EXPECT_EQ(shapes["gen.out.weight"], (std::vector<int>{64, 1, 4, 4, 4}));
}

TEST(Discriminator, PatchGridInUnitInterval) {
  const DiscriminatorConfig cfg = toy_discriminator();
  const ModelWeights w = random_weights(discriminator_parameter_specs(cfg), 3);
  const auto x = random_input<float>({1, 16, 16, 16}, 4), y = random_input<float>({1, 16, 16, 16}, 5);
  const Tensor4<float> d = discriminator_forward(x, y, w, cfg);
  EXPECT_EQ(d.shape, (std::array<int, 4>{1, 2, 2, 2}));
  for (float v : d.data) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
  const auto x2 = random_input<float>({1, 16, 16, 16}, 6);
  EXPECT_GT(max_abs_diff(d.data, discriminator_forward(x2, y, w, cfg).data), 0.0);
}

TEST(Discriminator, ZeroWeightsGiveOneHalf) {
  const DiscriminatorConfig cfg = toy_discriminator();
  ModelWeights w = random_weights(discriminator_parameter_specs(cfg), 3);
  for (auto& [name, t] : w.tensors) std::fill(t.values.begin(), t.values.end(), 0.0f);
  const auto x = random_input<float>({1, 16, 16, 16}, 4);
  for (float v : discriminator_forward(x, x, w, cfg).data) EXPECT_EQ(v, 0.5f);
}

TEST(Discriminator, ShapeMismatch) {
  const DiscriminatorConfig cfg = toy_discriminator();
  const ModelWeights w = random_weights(discriminator_parameter_specs(cfg), 3);
  EXPECT_THROW(discriminator_forward(random_input<float>({1, 16, 16, 16}, 1), random_input<float>({1, 16, 16, 8}, 1),
                                     w, cfg),
               Error);
}

TEST(Losses, L15Examples) {
  Tensor4<double> x({1, 1, 1, 3}), g({1, 1, 1, 3});
  EXPECT_EQ(l15_term(x, g), 0.0);
  g.data = {1, 1, 1};
  EXPECT_DOUBLE_EQ(l15_term(x, g), 1.0);
  g.data = {0.25, -1, 4};
  EXPECT_NEAR(l15_term(x, g), (0.125 + 1 + 8) / 3, 1e-12);
  EXPECT_THROW(l15_term(x, Tensor4<double>({1, 1, 1, 2})), Error);
}

TEST(Losses, AdversarialClosedForm) {
  const Tensor4<double> half({1, 2, 2, 2}, 0.5), x({1, 4, 4, 4}, 0.3);
  const auto l = adversarial_losses(half, half, x, x, 0.015);
  EXPECT_NEAR(l.loss_D, 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(l.loss_G, std::log(2.0), 1e-12);
  EXPECT_NEAR(l.loss_D, 1.3863, 5e-5);
  EXPECT_NEAR(l.loss_G, 0.6931, 5e-5);
}

TEST(Losses, LambdaWeighting) {
  const Tensor4<double> d({1, 2, 2, 2}, 0.3), x({1, 1, 1, 4}, 0.0);
  Tensor4<double> g({1, 1, 1, 4}, 0.0);
  const double r = std::pow(2.0, 2.0 / 3.0);  // |r|^1.5 = 2
  g.data = {r, -r, r, -r};
  const auto with = adversarial_losses(d, d, x, g, 0.015);
  const auto without = adversarial_losses(d, d, x, g, 0.0);
  EXPECT_NEAR(with.l15, 2.0, 1e-12);
  EXPECT_NEAR(with.loss_G - without.loss_G, 0.03, 1e-12);
  EXPECT_NEAR(without.loss_G, -std::log(0.3), 1e-12);
}

TEST(Losses, NaNRaises) {
  Tensor4<double> d({1, 1, 1, 2}, 0.5), x({1, 1, 1, 2}, 0.0);
  d.data[1] = std::nan("");
  try {
    adversarial_losses(d, Tensor4<double>({1, 1, 1, 2}, 0.5), x, x, 0.015);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NumericalError);
  }
}

TEST(Losses, ClampedAwayFromZeroAndOne) {
  const Tensor4<double> zero({1, 1, 1, 1}, 0.0), one({1, 1, 1, 1}, 1.0), x({1, 1, 1, 1}, 0.0);
  const auto l = adversarial_losses(zero, one, x, x, 0.015);
  EXPECT_TRUE(std::isfinite(l.loss_D));
  EXPECT_NEAR(l.loss_D, -2 * std::log(kProbabilityEps), 1e-6);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  Tensor4<double> x({1, 1, 2, 3}), g({1, 1, 2, 3}), d({1, 1, 2, 3});
  x.data = {0.1, -0.4, 0.9, 0.0, 0.3, -0.2};
  g.data = {0.5, -0.1, 0.2, -0.7, 0.31, 0.4};
  d.data = {0.2, 0.5, 0.9, 0.35, 0.6, 0.01};
  const auto lg = l15_grad(x, g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    Tensor4<double> up = g, down = g;
    up.data[i] += 1e-6;
    down.data[i] -= 1e-6;
    EXPECT_NEAR(lg.data[i], (l15_term(x, up) - l15_term(x, down)) / 2e-6, 1e-6);
  }
  for (bool real : {true, false}) {
    const auto bg = bce_grad(d, real);
    for (std::size_t i = 0; i < d.size(); ++i) {
      Tensor4<double> up = d, down = d;
      up.data[i] += 1e-7;
      down.data[i] -= 1e-7;
      auto f = [&](const Tensor4<double>& t) {
        return real ? adversarial_losses(t, t, x, x, 0.0).adversarial_G
                    : adversarial_losses(Tensor4<double>(t.shape, 0.5), t, x, x, 0.0).loss_D;
      };
      EXPECT_NEAR(bg.data[i], (f(up) - f(down)) / 2e-7, 1e-4 * std::abs(bg.data[i]));
    }
  }
}

TEST(Optimizer, SgdOnQuadratic) {
  ParameterSet<double> p;
  p.add({"w", {1}}, {3.0});
  p.at("w").grad[0] = 2 * 3.0;
  sgd_step(p, 0.1);
  EXPECT_NEAR(p.value("w")[0], 2.4, 1e-15);
}

TEST(Optimizer, AdamFirstStepMovesByLr) {
  ParameterSet<double> p;
  p.add({"w", {2}}, {3.0, -1.0});
  p.at("w").grad = {6.0, -0.5};
  Adam<double> adam;
  adam.step(p, 0.01);
  EXPECT_NEAR(p.value("w")[0], 2.99, 1e-8);
  EXPECT_NEAR(p.value("w")[1], -0.99, 1e-8);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Optimizer, NonFiniteGradientRaises) {
  ParameterSet<double> p;
  p.add({"w", {1}}, {1.0});
  p.at("w").grad[0] = INFINITY;
  Adam<double> adam;
  EXPECT_THROW(adam.step(p, 0.1), Error);
  EXPECT_THROW(sgd_step(p, 0.1), Error);
}

TEST(Optimizer, AdamMinimisesQuadratic) {
  ParameterSet<double> p;
  p.add({"w", {1}}, {3.0});
  Adam<double> adam(AdamConfig{0.5, 0.999, 1e-8});
  for (int i = 0; i < 500; ++i) {
    p.at("w").grad[0] = 2 * p.value("w")[0];
    adam.step(p, 0.05);
  }
  EXPECT_LT(std::abs(p.value("w")[0]), 0.05);
}

// Finite differences are taken around weights drawn with std 0.2; at the
// training initialisation (std 0.02) a step of 1e-4 is large enough relative
// to the weights to cross ReLU kinks.
template <typename Net>
ParameterSet<double> gradcheck_params(const Net& net, std::uint64_t seed) {
  Rng init(seed);
  ParameterSet<double> p = init_parameters<double>(net.parameter_specs(), init);
  for (auto& [name, param] : p.entries()) {
    for (double& v : param.value) v *= 10.0;
  }
  return p;
}

void expect_gradients_match(ParameterSet<double>& p, const std::function<double()>& loss) {
  std::mt19937_64 pick(3);
  for (const auto& [type, names] : gradcheck::group_by_layer_type(p)) {
    const auto samples = gradcheck::check(p, names, 50, loss, pick);
    EXPECT_EQ(samples.size(), 50u) << type;
    EXPECT_LT(gradcheck::max_error(samples), 1e-4) << type;
  }
  for (const auto& [name, param] : p.entries()) {
    if (name.find(".bias") == std::string::npos) continue;
    EXPECT_LT(gradcheck::max_error(gradcheck::check(p, {name}, param.value.size(), loss, pick)), 1e-4) << name;
  }
}

class GeneratorGradient : public ::testing::TestWithParam<int> {};

TEST_P(GeneratorGradient, MatchesCentralDifferences) {
  const Generator<double> gen(toy_generator(GetParam(), 2));
  ParameterSet<double> p = gradcheck_params(gen, 11);
  Tensor4<double> y = random_input<double>({1, 8, 8, 8}, 12);
  const auto probe = random_input<double>({1, 8, 8, 8}, 13);
  auto loss = [&] {
    Rng r(5);
    const auto out = gen.forward(y, p, &r);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.data[i] * probe.data[i];
    return s;
  };
  GeneratorCache<double> cache;
  Rng r(5);
  gen.forward(y, p, &r, &cache);
  p.zero_grad();
  const Tensor4<double> dy = gen.backward(cache, p, probe);
  expect_gradients_match(p, loss);
  for (std::size_t i = 0; i < y.size(); i += 17) {
    const double saved = y.data[i];
    y.data[i] = saved + 1e-4;
    const double up = loss();
    y.data[i] = saved - 1e-4;
    const double down = loss();
    y.data[i] = saved;
    EXPECT_LT(gradcheck::relative_error(dy.data[i], (up - down) / 2e-4), 1e-4);
  }
}

INSTANTIATE_TEST_SUITE_P(Levels, GeneratorGradient, ::testing::Values(1, 2));

TEST(DiscriminatorGradient, MatchesCentralDifferences) {
  DiscriminatorConfig cfg = toy_discriminator();
  cfg.layers = 2;
  const Discriminator<double> disc(cfg);
  ParameterSet<double> p = gradcheck_params(disc, 21);
  Tensor4<double> x = random_input<double>({1, 8, 8, 8}, 12);
  const auto y = random_input<double>({1, 8, 8, 8}, 14);
  const auto probe = random_input<double>({1, 2, 2, 2}, 13);
  auto loss = [&] {
    const auto out = disc.forward(x, y, p);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.data[i] * probe.data[i];
    return s;
  };
  DiscriminatorCache<double> cache;
  disc.forward(x, y, p, &cache);
  p.zero_grad();
  const Tensor4<double> dx = disc.backward(cache, p, probe);
  expect_gradients_match(p, loss);
  for (std::size_t i = 0; i < x.size(); i += 13) {
    const double saved = x.data[i];
    x.data[i] = saved + 1e-4;
    const double up = loss();
    x.data[i] = saved - 1e-4;
    const double down = loss();
    x.data[i] = saved;
    EXPECT_LT(gradcheck::relative_error(dx.data[i], (up - down) / 2e-4), 1e-4);
  }
}

TEST(Schedule, CosineLr) {
  TrainSchedule s;
  EXPECT_DOUBLE_EQ(cosine_lr(0, s), 0.0002);
  EXPECT_NEAR(cosine_lr(500, s), 0.0001, 1e-15);
  EXPECT_DOUBLE_EQ(cosine_lr(1000, s), 0.0002);
  EXPECT_NEAR(cosine_lr(1999, s), cosine_lr(999, s), 1e-18);
  EXPECT_LT(cosine_lr(999, s), 1e-9);
  EXPECT_THROW(cosine_lr(-1, s), Error);
}

TEST(Schedule, Defaults) {
  const TrainSchedule s;
  EXPECT_EQ(s.epochs, 50);
  EXPECT_EQ(s.validate_every, 7);
  EXPECT_EQ(s.cosine_decay_period, 1000);
  EXPECT_DOUBLE_EQ(s.lambda, 0.015);
  EXPECT_DOUBLE_EQ(s.base_lr, 0.0002);
}

TEST(Training, EmptyDatasetRaises) {
  try {
    train({}, toy_generator(), toy_discriminator(), TrainSchedule{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(Training, CheckpointCountAndDeterminism) {
  TrainSchedule s;
  s.epochs = 3;
  s.validate_every = 1;
  s.seed = 9;
  TrainOptions o;
  o.tile_shape = {16, 16, 16};
  const auto pairs = toy_pairs();
  const TrainResult a = train(pairs, toy_generator(), toy_discriminator(), s, o);
  ASSERT_EQ(a.checkpoints.size(), 4u);
  EXPECT_EQ(a.checkpoints[0].name, "gen_epoch1");
  EXPECT_EQ(a.checkpoints[2].name, "gen_epoch3");
  EXPECT_EQ(a.checkpoints[3].name, "gen_final");
  EXPECT_EQ(a.log.size(), 6u);
  for (const auto& r : a.log) EXPECT_DOUBLE_EQ(r.lr, cosine_lr(r.step, s));
  EXPECT_EQ(a.final_weights.metadata["step"], 6);
  EXPECT_EQ(a.final_weights.metadata["tile_shape"], (std::vector<int>{16, 16, 16}));

  const TrainResult b = train(pairs, toy_generator(), toy_discriminator(), s, o);
  EXPECT_EQ(encode_weights(a.final_weights), encode_weights(b.final_weights));
  EXPECT_EQ(loss_log_csv(a.log), loss_log_csv(b.log));
  s.seed = 10;
  const TrainResult c = train(pairs, toy_generator(), toy_discriminator(), s, o);
  EXPECT_NE(encode_weights(a.final_weights), encode_weights(c.final_weights));
}

TEST(Training, LossLogLambdaIdentity) {
  TrainSchedule s;
  s.epochs = 1;
  TrainOptions o;
  o.tile_shape = {16, 16, 16};
  std::vector<LossRecord> seen;
  o.on_step = [&](const LossRecord& r) { seen.push_back(r); };
  const TrainResult r = train(toy_pairs(), toy_generator(), toy_discriminator(), s, o);
  ASSERT_EQ(seen.size(), r.log.size());
  EXPECT_EQ(loss_log_csv(r.log).substr(0, 26), "step,loss_D,loss_G,l15,lr\n");
  EXPECT_NE(loss_log_csv(r.log).find("\n0,"), std::string::npos);
  EXPECT_NE(loss_log_csv(r.log).find(",0.0002\n"), std::string::npos);
}

TEST(Training, L15FallsOverToyRun) {
  GeneratorConfig g = toy_generator(2, 8);
  DiscriminatorConfig d = toy_discriminator();
  d.base_channels = 8;
  TrainSchedule s;
  s.epochs = 100;
  s.validate_every = 100;
  s.seed = 1;
  TrainOptions o;
  o.tile_shape = {16, 16, 16};
  const TrainResult r = train(toy_pairs(), g, d, s, o);
  ASSERT_EQ(r.log.size(), 200u);
  const double first = (r.log[0].l15 + r.log[1].l15) / 2;
  const double last = (r.log[198].l15 + r.log[199].l15) / 2;
  EXPECT_LT(last, first);
  EXPECT_LE(r.log[199].l15, 0.5 * r.log[0].l15);
}

TEST(ModelWeightsFile, RoundTrip) {
  ModelWeights w = random_weights(generator_parameter_specs(toy_generator()), 4);
  w.metadata["seed"] = 12;
  w.metadata["note"] = "x";
  const auto bytes = encode_weights(w);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RFKW");
  EXPECT_EQ(bytes[4], 1);
  const ModelWeights back = decode_weights(bytes);
  EXPECT_EQ(back.metadata, w.metadata);
  ASSERT_EQ(back.tensors.size(), w.tensors.size());
  for (const auto& [name, t] : w.tensors) {
    EXPECT_EQ(back.at(name).shape, t.shape);
    EXPECT_EQ(back.at(name).values, t.values);
  }
  EXPECT_EQ(encode_weights(back), bytes);
}

TEST(ModelWeightsFile, IndexDescribesPayload) {
  ModelWeights w;
  w.tensors["b"] = {{2}, {1.0f, -2.0f}};
  w.tensors["a"] = {{1, 1}, {0.5f}};
  const auto bytes = encode_weights(w);
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[8 + i]) << (8 * i);
  const auto index = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  EXPECT_EQ(index["tensors"]["a"]["offset"], 0);
  EXPECT_EQ(index["tensors"]["b"]["offset"], 4);
  EXPECT_EQ(index["tensors"]["b"]["length"], 8);
  EXPECT_EQ(index["tensors"]["b"]["dtype"], "float32");
  EXPECT_EQ(bytes.size(), 16 + len + 12);
  float v;
  std::memcpy(&v, bytes.data() + 16 + len + 8, 4);
  EXPECT_EQ(v, -2.0f);
}

TEST(ModelWeightsFile, Corruption) {
  ModelWeights w;
  w.tensors["a"] = {{3}, {1, 2, 3}};
  auto bytes = encode_weights(w);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_weights(bad), Error);
  bad = bytes;
  bad.pop_back();
  try {
    decode_weights(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TruncatedFile);
  }
  EXPECT_THROW(decode_weights({'R', 'F'}), Error);
}

TEST(ModelWeightsFile, ShapeChecked) {
  const GeneratorConfig cfg = toy_generator();
  ModelWeights w = random_weights(generator_parameter_specs(cfg), 4);
  w.tensors["gen.enc0.weight"].shape = {4, 1, 4, 4, 2, 2};
  EXPECT_THROW(to_parameters<float>(w, generator_parameter_specs(cfg)), Error);
}

namespace {

struct RefaceFixture {
  HeadPhantom phantom = make_head_phantom({32, 32, 32}, 3);
  GeneratorConfig cfg = toy_generator(2, 4);
  ModelWeights weights;

  RefaceFixture() {
    weights = random_weights(generator_parameter_specs(cfg), 5);
    weights.metadata["generator"] = to_json(cfg);
    weights.metadata["tile_shape"] = std::vector<int>{16, 16, 16};
    weights.metadata["winsorize_cap"] = 1300.0;
  }
};

}  // namespace

TEST(Reface, OnlyFaceMaskChanges) {
  RefaceFixture f;
  RefaceOptions opt;
  opt.seed = 1;
  StageTimings timings;
  const NiftiImage out = reface_image(f.phantom.defaced, f.weights, f.cfg, opt, &timings);
  const BinaryMask mask = face_air_mask(f.phantom.defaced);
  std::int64_t changed_inside = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const float before = f.phantom.defaced.data.data[i], after = out.data.data[i];
    if (!mask.data[i]) {
      EXPECT_EQ(std::bit_cast<std::uint32_t>(before), std::bit_cast<std::uint32_t>(after));
    } else if (before != after) {
      ++changed_inside;
    }
  }
  EXPECT_GT(changed_inside, 0);
  EXPECT_EQ(out.datatype_code, f.phantom.defaced.datatype_code);
  EXPECT_EQ(timings.size(), 4u);
}

TEST(Reface, SeedControlsNoise) {
  RefaceFixture f;
  RefaceOptions opt;
  opt.seed = 1;
  const NiftiImage a = reface_image(f.phantom.defaced, f.weights, f.cfg, opt);
  opt.threads = 3;
  const NiftiImage b = reface_image(f.phantom.defaced, f.weights, f.cfg, opt);
  EXPECT_EQ(a.data.data, b.data.data);
  opt.seed = 2;
  const NiftiImage c = reface_image(f.phantom.defaced, f.weights, f.cfg, opt);
  const BinaryMask mask = face_air_mask(f.phantom.defaced);
  double diff_inside = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.data[i]) diff_inside += std::abs(a.data.data[i] - c.data.data[i]);
  }
  EXPECT_GT(diff_inside, 0.0);
}

TEST(Reface, InferenceConfigComesFromMetadata) {
  RefaceFixture f;
  const GeneratorConfig c = inference_config(f.weights);
  EXPECT_EQ(c.levels, 2);
  EXPECT_EQ(c.base_channels, 4);
  EXPECT_EQ(inference_config(ModelWeights{}).levels, 4);
}
