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

#include "reface/reid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "reface/error.hpp"

namespace reface {

namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments population_moments(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.sd = std::sqrt(ss / static_cast<double>(v.size()));
  return m;
}

std::string record_key(const std::string& subject, const std::string& session) { return subject + '\x1f' + session; }

}  // namespace

const char* to_string(DistanceScale s) { return s == DistanceScale::X100 ? "x100" : "raw"; }

DistanceScale parse_distance_scale(const std::string& s) {
  if (s == "raw") return DistanceScale::Raw;
  if (s == "x100") return DistanceScale::X100;
  fail(ErrorCode::InvalidArgument, "report scale must be 'raw' or 'x100', got '" + s + "'");
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::ShapeMismatch, "cosine_distance: vectors differ in length");
  if (a.empty()) fail(ErrorCode::EmptyInput, "cosine_distance: empty vectors");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) fail(ErrorCode::ZeroVector, "cosine_distance: zero-norm embedding");
  return std::clamp(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 2.0);
}

ReidSummary reid_summary_from_distances(const std::vector<double>& distances, double threshold,
                                        DistanceScale scale) {
  if (distances.empty()) fail(ErrorCode::EmptyInput, "reid_summary: no face pairs");
  ReidSummary s;
  s.distances = distances;
  s.threshold = threshold;
  s.scale = scale;
  std::size_t below = 0;
  std::vector<double> inverse;
  for (double d : distances) {
    if (!std::isfinite(d) || d < 0.0) fail(ErrorCode::InvalidArgument, "reid_summary: invalid distance");
    if (d < threshold) ++below;
    if (d > kIdenticalDistance)
      inverse.push_back(1.0 / d);
    else
      ++s.identical_pairs;
  }
  const Moments dm = population_moments(distances);
  s.mean_distance = dm.mean;
  s.std_distance = dm.sd;
  s.pct_identifiable = 100.0 * static_cast<double>(below) / static_cast<double>(distances.size());
  const Moments im = population_moments(inverse);
  s.mean_inverse_distance = im.mean;
  s.std_inverse_distance = im.sd;
  s.inverse_count = inverse.size();
  if (s.identical_pairs > 0)
    s.warnings.push_back("IdenticalFacePair: " + std::to_string(s.identical_pairs) +
                         " pair(s) at distance <= 1e-6 left out of the inverse-distance mean");
  return s;
}

ReidSummary reid_summary(const std::vector<EmbeddingPair>& pairs, double threshold, DistanceScale scale) {
  if (pairs.empty()) fail(ErrorCode::EmptyInput, "reid_summary: no face pairs");
  std::vector<double> d;
  d.reserve(pairs.size());
  for (const auto& [orig, anon] : pairs) d.push_back(cosine_distance(orig, anon));
  return reid_summary_from_distances(d, threshold, scale);
}

KruskalWallis kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) fail(ErrorCode::InsufficientData, "kruskal_wallis: need at least 2 groups");
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) fail(ErrorCode::EmptyInput, "kruskal_wallis: empty group");
    for (double v : groups[g]) pooled.emplace_back(v, g);
  }
  const double n = static_cast<double>(pooled.size());
  if (pooled.size() < 3) fail(ErrorCode::InsufficientData, "kruskal_wallis: need at least 3 observations");
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> rank_sum(groups.size(), 0.0);
  double ties = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j + 1 < pooled.size() && pooled[j + 1].first == pooled[i].first) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank_sum[pooled[t].second] += r;
    const double t = static_cast<double>(j - i + 1);
    ties += t * t * t - t;
    i = j + 1;
  }
  const double correction = 1.0 - ties / (n * n * n - n);
  if (correction <= 0.0) fail(ErrorCode::DegenerateTies, "kruskal_wallis: all values identical");
  double s = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) s += rank_sum[g] * rank_sum[g] / static_cast<double>(groups[g].size());
  KruskalWallis kw;
  kw.h = (12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0)) / correction;
  kw.df = static_cast<int>(groups.size()) - 1;
  return kw;
}

double relative_overlap(const std::vector<double>& a, const std::vector<double>& b, int bins) {
  if (a.empty() || b.empty()) fail(ErrorCode::EmptyInput, "relative_overlap: empty sample");
  if (bins < 1) fail(ErrorCode::InvalidArgument, "relative_overlap: bins must be positive");
  const auto [alo, ahi] = std::minmax_element(a.begin(), a.end());
  const auto [blo, bhi] = std::minmax_element(b.begin(), b.end());
  const double lo = std::min(*alo, *blo), hi = std::max(*ahi, *bhi);
  if (!(hi > lo)) return 1.0;
  auto histogram = [&](const std::vector<double>& v) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    for (double x : v) {
      const int k = std::min(bins - 1, static_cast<int>(std::floor((x - lo) / (hi - lo) * bins)));
      h[static_cast<std::size_t>(k)] += 1.0 / static_cast<double>(v.size());
    }
    return h;
  };
  const auto p = histogram(a), q = histogram(b);
  double overlap = 0.0;
  for (int i = 0; i < bins; ++i) overlap += std::min(p[static_cast<std::size_t>(i)], q[static_cast<std::size_t>(i)]);
  return std::min(1.0, overlap);
}

std::vector<ModelRanking> select_model(const std::vector<ModelDistances>& models, int bins) {
  if (models.empty()) fail(ErrorCode::EmptyInput, "select_model: no models");
  std::vector<ModelRanking> out;
  for (const auto& m : models) {
    ModelRanking r;
    r.model = m.model;
    r.overlap = relative_overlap(m.correct_match, m.incorrect_match, bins);
    r.h = kruskal_wallis({m.correct_match, m.incorrect_match}).h;
    out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(), [](const ModelRanking& x, const ModelRanking& y) {
    if (x.overlap != y.overlap) return x.overlap < y.overlap;
    return x.h > y.h;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i) + 1;
  return out;
}

std::vector<EmbeddingRecord> parse_embeddings(const std::string& text) {
  std::vector<EmbeddingRecord> out;
  std::set<std::string> seen;
  std::size_t width = 0;
  for (const auto& [no, line] : csv::lines(text)) {
    const auto f = csv::split(line);
    if (out.empty() && !f.empty() && f[0] == "subject_id") continue;
    if (f.size() < 4)
      fail(ErrorCode::ParseError, "line " + std::to_string(no) + ": need subject_id,session_id,variant,v0,...");
    EmbeddingRecord r{f[0], f[1], f[2], {}};
    if (r.subject_id.empty() || r.variant.empty())
      fail(ErrorCode::ParseError, "line " + std::to_string(no) + ": empty subject or variant");
    double norm = 0.0;
    for (std::size_t c = 3; c < f.size(); ++c) {
      r.vector.push_back(csv::to_double(f[c], no));
      norm += r.vector.back() * r.vector.back();
    }
    if (norm == 0.0) fail(ErrorCode::ZeroVector, "line " + std::to_string(no) + ": zero embedding");
    if (width == 0) width = r.vector.size();
    if (r.vector.size() != width)
      fail(ErrorCode::ShapeMismatch, "line " + std::to_string(no) + ": embedding length " +
                                         std::to_string(r.vector.size()) + ", expected " + std::to_string(width));
    if (!seen.insert(record_key(r.subject_id, r.session_id) + '\x1f' + r.variant).second)
      fail(ErrorCode::ParseError, "line " + std::to_string(no) + ": duplicate record");
    out.push_back(std::move(r));
  }
  if (out.empty()) fail(ErrorCode::EmptyInput, "no embedding records");
  return out;
}

std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_embeddings(ss.str());
}

std::vector<std::string> embedding_tools(const std::vector<EmbeddingRecord>& records) {
  std::vector<std::string> tools;
  for (const auto& r : records)
    if (r.variant != "original" && std::find(tools.begin(), tools.end(), r.variant) == tools.end())
      tools.push_back(r.variant);
  return tools;
}

std::vector<EmbeddingPair> pair_embeddings(const std::vector<EmbeddingRecord>& records, const std::string& tool) {
  std::map<std::string, const EmbeddingRecord*> originals;
  for (const auto& r : records)
    if (r.variant == "original") originals[record_key(r.subject_id, r.session_id)] = &r;
  std::vector<EmbeddingPair> out;
  for (const auto& r : records) {
    if (r.variant != tool) continue;
    const auto it = originals.find(record_key(r.subject_id, r.session_id));
    if (it == originals.end())
      fail(ErrorCode::InvalidArgument, "no original embedding for " + r.subject_id + "/" + r.session_id);
    out.emplace_back(it->second->vector, r.vector);
  }
  if (out.empty()) fail(ErrorCode::EmptyInput, "no embeddings for tool '" + tool + "'");
  return out;
}

}  // namespace reface
