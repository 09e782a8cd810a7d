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

#include <random>

#include "reface/volume_ops.hpp"
#include "support/oracles.hpp"

using namespace reface;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::InvalidArgument;
}

NiftiImage image_of(const std::vector<float>& values, Dims3 dims) {
  FloatGrid g(dims);
  g.data = values;
  return make_image(g, Affine::Identity());
}

FloatGrid random_grid(Dims3 dims, std::mt19937& rng) {
  FloatGrid g(dims);
  std::uniform_real_distribution<float> u(-100.0f, 3000.0f);
  for (float& v : g.data) v = u(rng);
  return g;
}

}  // namespace

TEST(Winsorize, ClampsAboveCap) {
  const NiftiImage img = image_of({0, 1500, 3200, 9000}, {4, 1, 1});
  EXPECT_EQ(winsorize(img, 3000).data.data, (std::vector<float>{0, 1500, 3000, 3000}));
  EXPECT_EQ(winsorize(image_of({5000}, {1, 1, 1}), 3000).data.data[0], 3000.0f);
}

TEST(Winsorize, NoOpBelowCapAndIdempotent) {
  std::mt19937 rng(1);
  const NiftiImage img = make_image(random_grid({5, 5, 5}, rng), Affine::Identity());
  EXPECT_EQ(winsorize(img, 1e6).data.data, img.data.data);
  const NiftiImage once = winsorize(img, 1000);
  EXPECT_EQ(winsorize(once, 1000).data.data, once.data.data);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_LE(once.data.data[i], img.data.data[i]);
}

TEST(ComputeCap, PercentileWithInterpolation) {
  const std::vector<double> single{10};
  EXPECT_DOUBLE_EQ(compute_cap(single, 80), 10);
  EXPECT_DOUBLE_EQ(compute_cap(single, 3), 10);
  std::vector<double> ramp;
  for (int i = 1; i <= 100; ++i) ramp.push_back(i);
  // Independent order-statistic arithmetic: position 0.8 * 99 = 79.2 between
  // the 80th (value 80) and 81st (value 81) order statistics.
  EXPECT_NEAR(compute_cap(ramp, 80), 80 + 0.2 * (81 - 80), 1e-12);
  const std::vector<double> flat(7, 42.5);
  EXPECT_DOUBLE_EQ(compute_cap(flat, 80), 42.5);
  EXPECT_EQ(code_of([] { compute_cap(std::vector<double>{}, 80); }), ErrorCode::EmptyInput);
}

TEST(Scale, FitClosedForms) {
  const ScaleCoeffs c = fit_scale(image_of({0, 1000, 3000}, {3, 1, 1}));
  EXPECT_NEAR(c.a, 2.0 / 3000, 1e-15);
  EXPECT_NEAR(c.b, -1.0, 1e-15);
  const ScaleCoeffs s = fit_scale(image_of({-5, 5}, {2, 1, 1}));
  EXPECT_NEAR(s.a, 0.2, 1e-15);
  EXPECT_NEAR(s.b, 0.0, 1e-15);
  EXPECT_NEAR(c.a * c.source_min + c.b, -1.0, 1e-9);
  EXPECT_NEAR(c.a * c.source_max + c.b, 1.0, 1e-9);
  EXPECT_EQ(code_of([] { fit_scale(image_of({4, 4, 4}, {3, 1, 1})); }), ErrorCode::DegenerateRange);
}

TEST(Scale, EndpointsAndInverse) {
  const NiftiImage img = image_of({0, 3000}, {2, 1, 1});
  const ScaleCoeffs c = fit_scale(img);
  EXPECT_FLOAT_EQ(apply_scale(img, c).data.data[1], 1.0f);
  EXPECT_FLOAT_EQ(invert_scale(image_of({-1.0f}, {1, 1, 1}), c).data.data[0], 0.0f);

  std::mt19937 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const NiftiImage r = make_image(random_grid({6, 5, 4}, rng), Affine::Identity());
    const ScaleCoeffs rc = fit_scale(r);
    const NiftiImage back = invert_scale(apply_scale(r, rc), rc);
    const double range = rc.source_max - rc.source_min;
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_LT(std::abs(back.data.data[i] - r.data.data[i]), 1e-5 * range);
  }
}

TEST(PlanTiles, ExactFitIsSingleTile) {
  const TilePlan p = plan_tiles({128, 128, 128});
  ASSERT_EQ(p.origins.size(), 1u);
  EXPECT_EQ(p.origins[0], (Dims3{0, 0, 0}));
}

TEST(PlanTiles, FourCornerTilesForTypicalScan) {
  const TilePlan p = plan_tiles({256, 256, 128});
  const std::vector<Dims3> expected{{0, 0, 0}, {128, 0, 0}, {0, 128, 0}, {128, 128, 0}};
  EXPECT_EQ(p.origins, expected);
}

TEST(PlanTiles, NonMultipleDimsStillCovered) {
  const TilePlan p = plan_tiles({200, 160, 128});
  const std::vector<Dims3> expected{{0, 0, 0}, {72, 0, 0}, {0, 32, 0}, {72, 32, 0}};
  EXPECT_EQ(p.origins, expected);
  // Voxel-count oracle: every voxel gets at least one tile.
  const Grid3<int> cov = coverage_count(p);
  EXPECT_EQ(std::count(cov.data.begin(), cov.data.end(), 0), 0);
}

TEST(PlanTiles, TooLargeRejected) {
  EXPECT_EQ(code_of([] { plan_tiles({257, 128, 128}); }), ErrorCode::VolumeTooLarge);
}

TEST(PlanTiles, SmallAxesArePaddedSymmetrically) {
  const TilePlan p = plan_tiles({100, 128, 60});
  EXPECT_EQ(p.padded_dims, (Dims3{128, 128, 128}));
  EXPECT_EQ(p.pad_before, (Dims3{14, 0, 34}));
  EXPECT_EQ(p.origins.size(), 1u);
}

TEST(Recombine, SplitRecombineIsBitIdentical) {
  std::mt19937 rng(9);
  const FloatGrid g = random_grid({200, 160, 128}, rng);
  const TilePlan p = plan_tiles(g.dims);
  EXPECT_EQ(recombine(split_tiles(g, p), p).data, g.data);
}

TEST(Recombine, OverlapIsAveraged) {
  const TilePlan p = plan_tiles({6, 4, 4}, {4, 4, 4});
  ASSERT_EQ(p.origins.size(), 2u);
  std::vector<FloatGrid> tiles{FloatGrid({4, 4, 4}, 0.0f), FloatGrid({4, 4, 4}, 2.0f)};
  const FloatGrid out = recombine(tiles, p);
  EXPECT_EQ(out(0, 0, 0), 0.0f);
  EXPECT_EQ(out(2, 1, 1), 1.0f);
  EXPECT_EQ(out(3, 3, 3), 1.0f);
  EXPECT_EQ(out(5, 0, 0), 2.0f);
}

TEST(Recombine, CoverageCountsForTypicalScan) {
  const Grid3<int> cov = coverage_count(plan_tiles({256, 256, 128}));
  for (int c : cov.data) EXPECT_TRUE(c == 1 || c == 2 || c == 4);
  // Brute-force enumeration of which axes fall in the overlap slab.
  const Grid3<int> cov2 = coverage_count(plan_tiles({200, 160, 128}));
  for (std::int64_t j = 0; j < 160; j += 7)
    for (std::int64_t i = 0; i < 200; i += 5) {
      const int ci = (i >= 72 && i < 128) ? 2 : 1;
      const int cj = (j >= 32 && j < 128) ? 2 : 1;
      EXPECT_EQ(cov2(i, j, 5), ci * cj);
    }
}

TEST(Recombine, ShapeMismatchRejected) {
  const TilePlan p = plan_tiles({6, 4, 4}, {4, 4, 4});
  std::vector<FloatGrid> tiles{FloatGrid({4, 4, 4})};
  EXPECT_EQ(code_of([&] { recombine(tiles, p); }), ErrorCode::ShapeMismatch);
  tiles.push_back(FloatGrid({4, 4, 3}));
  EXPECT_EQ(code_of([&] { recombine(tiles, p); }), ErrorCode::ShapeMismatch);
}

TEST(Closing, FillsSingleInteriorHole) {
  BinaryMask m({7, 7, 7}, 0);
  for (std::int64_t k = 1; k < 6; ++k)
    for (std::int64_t j = 1; j < 6; ++j)
      for (std::int64_t i = 1; i < 6; ++i) m(i, j, k) = 1;
  m(3, 3, 3) = 0;
  const BinaryMask c = closing_3d(m, 1);
  EXPECT_EQ(c(3, 3, 3), 1);
  EXPECT_EQ(c.data, oracle::brute_closing(m.data, {7, 7, 7}, 1));
}

TEST(Closing, EmptyAndFullAreFixedPoints) {
  const BinaryMask empty({5, 6, 7}, 0), full({5, 6, 7}, 1);
  EXPECT_EQ(closing_3d(empty).data, empty.data);
  EXPECT_EQ(closing_3d(full).data, full.data);
}

TEST(Closing, MatchesBruteForceAndIsExtensiveIdempotent) {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::array<int, 3> d{static_cast<int>(rng() % 8 + 2), static_cast<int>(rng() % 8 + 2),
                               static_cast<int>(rng() % 8 + 2)};
    BinaryMask m({d[0], d[1], d[2]}, 0);
    for (auto& v : m.data) v = (rng() % 100) < 35 ? 1 : 0;
    const int radius = 1 + trial % 2;
    const BinaryMask c = closing_3d(m, radius);
    EXPECT_EQ(c.data, oracle::brute_closing(m.data, d, radius));
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m.data[i]) EXPECT_TRUE(c.data[i]);
    EXPECT_EQ(closing_3d(c, radius).data, c.data);
  }
}

TEST(FaceAirMask, NoZerosGivesEmptyMask) {
  const NiftiImage img = image_of(std::vector<float>(27, 4.0f), {3, 3, 3});
  EXPECT_EQ(count_true(face_air_mask(img)), 0);
}

TEST(FaceAirMask, CoversZeroedOctant) {
  FloatGrid g({16, 16, 16}, 0.0f);
  for (std::int64_t k = 0; k < 16; ++k)
    for (std::int64_t j = 0; j < 16; ++j)
      for (std::int64_t i = 0; i < 16; ++i) {
        const double r = std::sqrt((i - 7.5) * (i - 7.5) + (j - 7.5) * (j - 7.5) + (k - 7.5) * (k - 7.5));
        g(i, j, k) = r < 7 ? 100.0f : 20.0f;
      }
  BinaryMask zeroed({16, 16, 16}, 0);
  for (std::int64_t k = 8; k < 16; ++k)
    for (std::int64_t j = 0; j < 8; ++j)
      for (std::int64_t i = 8; i < 16; ++i) {
        g(i, j, k) = 0.0f;
        zeroed(i, j, k) = 1;
      }
  const BinaryMask m = face_air_mask(make_image(g, Affine::Identity()));
  for (std::size_t i = 0; i < m.size(); ++i)
    if (zeroed.data[i]) EXPECT_TRUE(m.data[i]);
}

TEST(FaceAirMask, AbsorbsIsolatedVoxelInZeroSlab) {
  FloatGrid g({9, 9, 9}, 50.0f);
  for (std::int64_t k = 0; k < 9; ++k)
    for (std::int64_t j = 0; j < 9; ++j)
      for (std::int64_t i = 0; i < 5; ++i) g(i, j, k) = 0.0f;
  g(2, 4, 4) = 7.0f;
  const BinaryMask m = face_air_mask(make_image(g, Affine::Identity()));
  EXPECT_TRUE(m(2, 4, 4));
  EXPECT_FALSE(m(6, 4, 4));
}

TEST(Composite, SelfCompositeOnlyZeroesAir) {
  FloatGrid g({10, 10, 10}, 80.0f);
  for (std::int64_t k = 0; k < 10; ++k)
    for (std::int64_t j = 0; j < 10; ++j)
      for (std::int64_t i = 0; i < 4; ++i) g(i, j, k) = 0.0f;
  const NiftiImage img = make_image(g, Affine::Identity());
  const NiftiImage out = composite_reface(img, img);
  EXPECT_EQ(out.data.data, img.data.data);
}

TEST(Composite, OctantTakesGeneratedValues) {
  FloatGrid g({12, 12, 12}, 60.0f);
  BinaryMask octant({12, 12, 12}, 0);
  for (std::int64_t k = 6; k < 12; ++k)
    for (std::int64_t j = 0; j < 6; ++j)
      for (std::int64_t i = 6; i < 12; ++i) {
        g(i, j, k) = 0.0f;
        octant(i, j, k) = 1;
      }
  const NiftiImage defaced = make_image(g, Affine::Identity());
  const NiftiImage generated = defaced.with_data(FloatGrid(g.dims, 100.0f));
  const NiftiImage out = composite_reface(defaced, generated);
  const BinaryMask face = face_air_mask(defaced);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (octant.data[i]) EXPECT_EQ(out.data.data[i], 100.0f);
    if (!face.data[i]) EXPECT_EQ(out.data.data[i], g.data[i]);
  }
}

TEST(Composite, LowAmplitudeNoiseBecomesAir) {
  FloatGrid g({12, 12, 12}, 60.0f);
  for (std::int64_t k = 0; k < 12; ++k)
    for (std::int64_t j = 0; j < 12; ++j)
      for (std::int64_t i = 0; i < 6; ++i) g(i, j, k) = 0.0f;
  const NiftiImage defaced = make_image(g, Affine::Identity());
  std::mt19937 rng(2);
  FloatGrid noise(g.dims);
  for (float& v : noise.data) v = std::uniform_real_distribution<float>(0.0f, 2.0f)(rng);
  const NiftiImage out = composite_reface(defaced, defaced.with_data(noise));
  for (std::int64_t k = 0; k < 12; ++k)
    for (std::int64_t j = 0; j < 12; ++j)
      for (std::int64_t i = 0; i < 5; ++i) EXPECT_EQ(out(i, j, k), 0.0f);
}

TEST(Composite, ShapeMismatchRejected) {
  const NiftiImage a = make_image(FloatGrid({2, 2, 2}), Affine::Identity());
  const NiftiImage b = make_image(FloatGrid({2, 2, 3}), Affine::Identity());
  EXPECT_EQ(code_of([&] { composite_reface(a, b); }), ErrorCode::ShapeMismatch);
}
