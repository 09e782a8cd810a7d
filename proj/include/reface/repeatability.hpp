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
#include <string>
#include <utility>
#include <vector>

#include "reface/grid.hpp"
#include "reface/nifti.hpp"
#include "reface/reid.hpp"

namespace reface {

/// Brain regions reported in every volumetric summary, in table order.
const std::vector<std::string>& canonical_regions();

struct RegionVolumeRow {
  std::string subject_id;
  std::string session_id;
  std::vector<double> volumes;  // millilitres, one per table region
};

/// Per-scan regional volumes from one segmentation backend.
struct RegionVolumeTable {
  std::vector<std::string> regions;
  std::vector<RegionVolumeRow> rows;
  std::string source;

  /// Column index of `region`, or -1.
  int region_index(const std::string& region) const;
  std::vector<double> column(const std::string& region) const;
  void validate() const;
};

/// CSV with header `subject_id,session_id,<region>,...`.
RegionVolumeTable parse_region_volumes(const std::string& text, const std::string& source = "");
RegionVolumeTable read_region_volumes(const std::filesystem::path& path);
std::string region_volumes_csv(const RegionVolumeTable& table);

/// Rows of `anonymized` reordered to match `original` by (subject, session).
RegionVolumeTable align_rows(const RegionVolumeTable& original, const RegionVolumeTable& anonymized);

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;     // rank sum of positive differences
  std::size_t n_used = 0;  // non-zero differences
  bool exact = false;
  bool degenerate = false;  // every difference was zero
};

/// Two-sided paired signed-rank test on before - after. Zero differences
/// are dropped. Exact null distribution up to 25 pairs, normal
/// approximation with tie and continuity correction above.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& before, const std::vector<double>& after);

inline constexpr std::size_t kWilcoxonExactMax = 25;
inline constexpr std::size_t kWilcoxonMinPairs = 5;

struct BhResult {
  std::vector<double> adjusted;
  std::vector<bool> rejected;
};

BhResult benjamini_hochberg(const std::vector<double>& pvals, double q = 0.05);

/// 1.96 times the sample standard deviation of paired differences.
double coefficient_of_repeatability(const std::vector<double>& diffs);

struct NcrResult {
  double ncr = 0.0;
  double spread = 0.0;
  std::vector<std::pair<std::string, double>> region_cr;  // normalized, per region
  std::vector<std::string> warnings;
};

/// Repeatability of min-max normalized volumes pooled over the canonical
/// regions present in both tables.
NcrResult ncr(const RegionVolumeTable& original, const RegionVolumeTable& anonymized);

double dice(const BinaryMask& a, const BinaryMask& b);
double dice(const FloatGrid& labels_a, const FloatGrid& labels_b, float label);

/// Dice averaged over the given labels.
double mean_dice(const FloatGrid& labels_a, const FloatGrid& labels_b, const std::vector<float>& labels);

struct BlandAltman {
  double mean_diff = 0.0;
  double sd_diff = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
  std::vector<std::pair<double, double>> points;  // (mean, before - after)
};

BlandAltman bland_altman(const std::vector<double>& before, const std::vector<double>& after);

struct C1Result {
  std::int64_t changed_voxels = 0;
  bool passed = true;
};

/// Counts voxels inside the mask whose value changed.
C1Result check_c1(const FloatGrid& before, const FloatGrid& after, const BinaryMask& tiv_mask);
C1Result check_c1(const NiftiImage& before, const NiftiImage& after, const BinaryMask& tiv_mask);

/// Quartile by linear interpolation between order statistics.
double quantile_linear(std::vector<double> values, double q);

/// Indices outside the Tukey fences [Q1 - k IQR, Q3 + k IQR].
std::vector<std::size_t> flag_outliers(const std::vector<double>& values, double k = 1.5);

struct RegionComparison {
  std::string region;
  WilcoxonResult wilcoxon;
  double adjusted_p = 1.0;
  bool significant = false;
  double cr = 0.0;
  BlandAltman bland_altman;
  std::vector<std::size_t> outliers;  // row indices with outlying differences
};

struct VolumeComparison {
  std::vector<RegionComparison> regions;
  NcrResult ncr;
  std::size_t n_scans = 0;
  std::vector<std::string> warnings;
};

/// Per-region tests, repeatability and Bland-Altman data for one tool,
/// with Benjamini-Hochberg applied across regions.
VolumeComparison compare_volumes(const RegionVolumeTable& original, const RegionVolumeTable& anonymized,
                                 double q = 0.05);

/// One tool's position on the reproducibility / re-identification plane.
struct TradeoffPoint {
  std::string tool;
  double ncr = 0.0;
  double ncr_spread = 0.0;
  double mean_inverse_distance = 0.0;
  double inv_dist_spread = 0.0;
};

TradeoffPoint tradeoff_point(const std::string& tool, const NcrResult& volumes, const ReidSummary& reid);

}  // namespace reface
