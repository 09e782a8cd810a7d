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

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace reface {

/// Decision threshold on ArcFace cosine distance separating same-subject
/// from different-subject face pairs.
inline constexpr double kReidThreshold = 0.4;

/// Distances at or below this are treated as identical faces.
inline constexpr double kIdenticalDistance = 1e-6;

enum class DistanceScale { Raw, X100 };

const char* to_string(DistanceScale s);
DistanceScale parse_distance_scale(const std::string& s);

/// 1 - cos(a, b), clamped to [0, 2].
double cosine_distance(std::span<const double> a, std::span<const double> b);

using EmbeddingPair = std::pair<std::vector<double>, std::vector<double>>;  // (original, anonymized)

struct ReidSummary {
  std::vector<double> distances;
  double mean_distance = 0.0;
  double std_distance = 0.0;  // population
  double pct_identifiable = 0.0;
  double mean_inverse_distance = 0.0;  // over pairs with d > kIdenticalDistance
  double std_inverse_distance = 0.0;
  std::size_t inverse_count = 0;
  std::size_t identical_pairs = 0;
  double threshold = kReidThreshold;
  DistanceScale scale = DistanceScale::Raw;
  std::vector<std::string> warnings;

  /// A raw distance expressed in this summary's reporting scale.
  double scaled(double raw) const { return scale == DistanceScale::X100 ? 100.0 * raw : raw; }
};

ReidSummary reid_summary(const std::vector<EmbeddingPair>& pairs, double threshold = kReidThreshold,
                         DistanceScale scale = DistanceScale::Raw);
ReidSummary reid_summary_from_distances(const std::vector<double>& distances, double threshold = kReidThreshold,
                                        DistanceScale scale = DistanceScale::Raw);

struct KruskalWallis {
  double h = 0.0;
  int df = 0;
};

/// H statistic with tie correction.
KruskalWallis kruskal_wallis(const std::vector<std::vector<double>>& groups);

/// Sum over equal-width bins of min(p_i, q_i), bins spanning both samples.
double relative_overlap(const std::vector<double>& a, const std::vector<double>& b, int bins = 50);

struct ModelDistances {
  std::string model;
  std::vector<double> correct_match;
  std::vector<double> incorrect_match;
};

struct ModelRanking {
  int rank = 0;
  std::string model;
  double overlap = 0.0;
  double h = 0.0;
};

/// Ranks face-recognition models by CM/IM overlap (ascending) then H
/// (descending).
std::vector<ModelRanking> select_model(const std::vector<ModelDistances>& models, int bins = 50);

struct EmbeddingRecord {
  std::string subject_id;
  std::string session_id;
  std::string variant;  // "original" or the anonymization tool name
  std::vector<double> vector;
};

/// Lines `subject_id,session_id,variant,v0,v1,...`; an optional header line
/// starting with `subject_id` is skipped.
std::vector<EmbeddingRecord> parse_embeddings(const std::string& text);
std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path);

/// Variants other than "original", in first-appearance order.
std::vector<std::string> embedding_tools(const std::vector<EmbeddingRecord>& records);

/// (original, anonymized) pairs for one tool, matched on subject and session.
std::vector<EmbeddingPair> pair_embeddings(const std::vector<EmbeddingRecord>& records, const std::string& tool);

}  // namespace reface
