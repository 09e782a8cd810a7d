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

#include "reface/repeatability.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "csv.hpp"

namespace reface {

namespace {

constexpr double kZ95 = 1.96;

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v, bool sample) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(sample ? v.size() - 1 : v.size()));
}

std::vector<double> paired_diffs(const std::vector<double>& before, const std::vector<double>& after,
                                 const char* what) {
  if (before.size() != after.size()) fail(ErrorCode::ShapeMismatch, std::string(what) + ": unequal sample sizes");
  std::vector<double> d(before.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = before[i] - after[i];
  return d;
}

// 1-based midranks of |d|.
std::vector<double> abs_midranks(const std::vector<double>& d, double* tie_term) {
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<double> ranks(d.size());
  double ties = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    const double t = static_cast<double>(j - i + 1);
    ties += t * t * t - t;
    i = j + 1;
  }
  if (tie_term) *tie_term = ties;
  return ranks;
}

std::string row_key(const RegionVolumeRow& r) { return r.subject_id + '\x1f' + r.session_id; }

std::vector<std::string> shared_canonical(const RegionVolumeTable& a, const RegionVolumeTable& b) {
  std::vector<std::string> out;
  for (const std::string& r : canonical_regions())
    if (a.region_index(r) >= 0 && b.region_index(r) >= 0) out.push_back(r);
  if (out.empty()) fail(ErrorCode::ShapeMismatch, "volume tables share no canonical region");
  return out;
}

}  // namespace

const std::vector<std::string>& canonical_regions() {
  static const std::vector<std::string> regions = {"TIV",     "CSF",      "GM",       "WM",          "Thalamus",
                                                   "Caudate", "Putamen", "Pallidum", "Hippocampus", "Amygdala"};
  return regions;
}

int RegionVolumeTable::region_index(const std::string& region) const {
  const auto it = std::find(regions.begin(), regions.end(), region);
  return it == regions.end() ? -1 : static_cast<int>(it - regions.begin());
}

std::vector<double> RegionVolumeTable::column(const std::string& region) const {
  const int c = region_index(region);
  if (c < 0) fail(ErrorCode::InvalidArgument, "no region column '" + region + "'");
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.volumes[static_cast<std::size_t>(c)]);
  return out;
}

void RegionVolumeTable::validate() const {
  std::set<std::string> seen;
  for (const auto& r : rows) {
    if (r.volumes.size() != regions.size())
      fail(ErrorCode::ShapeMismatch, "row " + r.subject_id + "/" + r.session_id + " has the wrong column count");
    for (double v : r.volumes)
      if (!(v > 0.0)) fail(ErrorCode::InvalidArgument, "non-positive volume for " + r.subject_id + "/" + r.session_id);
    if (!seen.insert(row_key(r)).second)
      fail(ErrorCode::InvalidArgument, "duplicate row " + r.subject_id + "/" + r.session_id);
  }
}

RegionVolumeTable parse_region_volumes(const std::string& text, const std::string& source) {
  const auto lines = csv::lines(text);
  if (lines.empty()) fail(ErrorCode::EmptyInput, "volume table is empty");
  const auto header = csv::split(lines[0].second);
  if (header.size() < 3 || header[0] != "subject_id" || header[1] != "session_id")
    fail(ErrorCode::ParseError, "volume table header must start with subject_id,session_id and name regions");
  RegionVolumeTable t;
  t.source = source;
  t.regions.assign(header.begin() + 2, header.end());
  std::set<std::string> names(t.regions.begin(), t.regions.end());
  if (names.size() != t.regions.size()) fail(ErrorCode::ParseError, "duplicate region column");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [no, line] = lines[i];
    const auto f = csv::split(line);
    if (f.size() != header.size())
      fail(ErrorCode::ParseError, "line " + std::to_string(no) + ": expected " + std::to_string(header.size()) +
                                      " fields, got " + std::to_string(f.size()));
    RegionVolumeRow row{f[0], f[1], {}};
    for (std::size_t c = 2; c < f.size(); ++c) row.volumes.push_back(csv::to_double(f[c], no));
    t.rows.push_back(std::move(row));
  }
  t.validate();
  return t;
}

RegionVolumeTable read_region_volumes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_region_volumes(ss.str(), path.stem().string());
}

std::string region_volumes_csv(const RegionVolumeTable& table) {
  std::string out = "subject_id,session_id";
  for (const auto& r : table.regions) out += "," + r;
  out += "\n";
  char buf[64];
  for (const auto& row : table.rows) {
    out += row.subject_id + "," + row.session_id;
    for (double v : row.volumes) {
      std::snprintf(buf, sizeof buf, ",%.10g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

RegionVolumeTable align_rows(const RegionVolumeTable& original, const RegionVolumeTable& anonymized) {
  std::map<std::string, const RegionVolumeRow*> by_key;
  for (const auto& r : anonymized.rows) by_key[row_key(r)] = &r;
  if (anonymized.rows.size() != original.rows.size())
    fail(ErrorCode::ShapeMismatch, "volume tables have different row counts");
  RegionVolumeTable out = anonymized;
  out.rows.clear();
  for (const auto& r : original.rows) {
    const auto it = by_key.find(row_key(r));
    if (it == by_key.end())
      fail(ErrorCode::ShapeMismatch, "no anonymized row for " + r.subject_id + "/" + r.session_id);
    out.rows.push_back(*it->second);
  }
  return out;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& before, const std::vector<double>& after) {
  const std::vector<double> all = paired_diffs(before, after, "wilcoxon_signed_rank");
  if (all.empty()) fail(ErrorCode::EmptyInput, "wilcoxon_signed_rank: no pairs");
  std::vector<double> d;
  for (double x : all)
    if (x != 0.0) d.push_back(x);
  WilcoxonResult res;
  if (d.empty()) {
    res.degenerate = true;
    return res;
  }
  const std::size_t n = d.size();
  if (n < kWilcoxonMinPairs)
    fail(ErrorCode::InsufficientData, "wilcoxon_signed_rank: " + std::to_string(n) + " non-zero differences, need " +
                                          std::to_string(kWilcoxonMinPairs));
  double tie_term = 0.0;
  const std::vector<double> ranks = abs_midranks(d, &tie_term);
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0) res.w_plus += ranks[i];
  res.n_used = n;

  if (n <= kWilcoxonExactMax) {
    // Midranks are multiples of 1/2, so doubled ranks give an integer
    // support for the null distribution of the positive rank sum.
    std::vector<int> r2(n);
    int total = 0, observed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      r2[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
      total += r2[i];
      if (d[i] > 0) observed += r2[i];
    }
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    int reach = 0;
    for (int r : r2) {
      for (int s = reach; s >= 0; --s) count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
      reach += r;
    }
    const int dev = std::abs(2 * observed - total);
    double hits = 0.0;
    for (int s = 0; s <= total; ++s)
      if (std::abs(2 * s - total) >= dev) hits += count[static_cast<std::size_t>(s)];
    res.p_value = std::min(1.0, std::ldexp(hits, -static_cast<int>(n)));
    res.exact = true;
    return res;
  }

  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  const double z = std::max(0.0, std::abs(res.w_plus - mean) - 0.5) / std::sqrt(var);
  res.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return res;
}

BhResult benjamini_hochberg(const std::vector<double>& pvals, double q) {
  for (double p : pvals)
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::InvalidArgument, "benjamini_hochberg: p-value outside [0, 1]");
  const std::size_t m = pvals.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });
  BhResult res{std::vector<double>(m), std::vector<bool>(m)};
  double running = 1.0;
  for (std::size_t k = m; k-- > 0;) {
    const std::size_t i = order[k];
    running = std::min(running, pvals[i] * (static_cast<double>(m) / static_cast<double>(k + 1)));
    res.adjusted[i] = std::min(1.0, running);
  }
  for (std::size_t i = 0; i < m; ++i) res.rejected[i] = res.adjusted[i] <= q;
  return res;
}

double coefficient_of_repeatability(const std::vector<double>& diffs) {
  if (diffs.size() < 2) fail(ErrorCode::InsufficientData, "coefficient_of_repeatability: need at least 2 differences");
  return kZ95 * sd_of(diffs, true);
}

NcrResult ncr(const RegionVolumeTable& original, const RegionVolumeTable& anonymized) {
  const RegionVolumeTable anon = align_rows(original, anonymized);
  if (original.rows.size() < 2) fail(ErrorCode::InsufficientData, "ncr: need at least 2 scans");
  NcrResult res;
  std::vector<double> pooled, crs;
  for (const std::string& region : shared_canonical(original, anon)) {
    const std::vector<double> o = original.column(region);
    const std::vector<double> a = anon.column(region);
    const auto [lo, hi] = std::minmax_element(o.begin(), o.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) {
      res.warnings.push_back("DegenerateRange: region " + region + " has constant original volume; excluded");
      continue;
    }
    std::vector<double> nd(o.size());
    for (std::size_t i = 0; i < o.size(); ++i) nd[i] = (o[i] - *lo) / range - (a[i] - *lo) / range;
    pooled.insert(pooled.end(), nd.begin(), nd.end());
    const double cr = coefficient_of_repeatability(nd);
    res.region_cr.emplace_back(region, cr);
    crs.push_back(cr);
  }
  if (crs.empty()) fail(ErrorCode::DegenerateRange, "ncr: every region has constant original volume");
  res.ncr = kZ95 * sd_of(pooled, false);
  res.spread = sd_of(crs, false);
  return res;
}

double dice(const BinaryMask& a, const BinaryMask& b) {
  require_same_dims(a, b, "dice");
  std::int64_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.data[i] != 0, y = b.data[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double dice(const FloatGrid& labels_a, const FloatGrid& labels_b, float label) {
  require_same_dims(labels_a, labels_b, "dice");
  std::int64_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    const bool x = labels_a.data[i] == label, y = labels_b.data[i] == label;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double mean_dice(const FloatGrid& labels_a, const FloatGrid& labels_b, const std::vector<float>& labels) {
  if (labels.empty()) fail(ErrorCode::EmptyInput, "mean_dice: no labels");
  double s = 0.0;
  for (float l : labels) s += dice(labels_a, labels_b, l);
  return s / static_cast<double>(labels.size());
}

BlandAltman bland_altman(const std::vector<double>& before, const std::vector<double>& after) {
  const std::vector<double> d = paired_diffs(before, after, "bland_altman");
  if (d.size() < 2) fail(ErrorCode::InsufficientData, "bland_altman: need at least 2 pairs");
  BlandAltman ba;
  ba.mean_diff = mean_of(d);
  ba.sd_diff = sd_of(d, true);
  ba.loa_low = ba.mean_diff - kZ95 * ba.sd_diff;
  ba.loa_high = ba.mean_diff + kZ95 * ba.sd_diff;
  for (std::size_t i = 0; i < d.size(); ++i) ba.points.emplace_back(0.5 * (before[i] + after[i]), d[i]);
  return ba;
}

C1Result check_c1(const FloatGrid& before, const FloatGrid& after, const BinaryMask& tiv_mask) {
  require_same_dims(before, after, "check_c1");
  require_same_dims(before, tiv_mask, "check_c1 mask");
  C1Result r;
  for (std::size_t i = 0; i < before.size(); ++i)
    if (tiv_mask.data[i] && !(before.data[i] == after.data[i])) ++r.changed_voxels;
  r.passed = r.changed_voxels == 0;
  return r;
}

C1Result check_c1(const NiftiImage& before, const NiftiImage& after, const BinaryMask& tiv_mask) {
  return check_c1(before.data, after.data, tiv_mask);
}

double quantile_linear(std::vector<double> values, double q) {
  if (values.empty()) fail(ErrorCode::EmptyInput, "quantile_linear: no values");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<std::size_t> flag_outliers(const std::vector<double>& values, double k) {
  if (values.size() < 4) fail(ErrorCode::InsufficientData, "flag_outliers: need at least 4 values");
  const double q1 = quantile_linear(values, 0.25);
  const double q3 = quantile_linear(values, 0.75);
  const double iqr = q3 - q1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] < q1 - k * iqr || values[i] > q3 + k * iqr) out.push_back(i);
  return out;
}

VolumeComparison compare_volumes(const RegionVolumeTable& original, const RegionVolumeTable& anonymized, double q) {
  const RegionVolumeTable anon = align_rows(original, anonymized);
  VolumeComparison out;
  out.n_scans = original.rows.size();
  for (const auto& r : original.regions)
    if (std::find(canonical_regions().begin(), canonical_regions().end(), r) == canonical_regions().end())
      out.warnings.push_back("region " + r + " is not a canonical region; excluded from summaries");
  std::vector<double> pvals;
  for (const std::string& region : shared_canonical(original, anon)) {
    const std::vector<double> o = original.column(region);
    const std::vector<double> a = anon.column(region);
    RegionComparison rc;
    rc.region = region;
    rc.wilcoxon = wilcoxon_signed_rank(o, a);
    if (rc.wilcoxon.degenerate) out.warnings.push_back("DegeneratePairs: region " + region + " has no differences");
    rc.bland_altman = bland_altman(o, a);
    std::vector<double> d(o.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = o[i] - a[i];
    rc.cr = coefficient_of_repeatability(d);
    if (d.size() >= 4) rc.outliers = flag_outliers(d);
    pvals.push_back(rc.wilcoxon.p_value);
    out.regions.push_back(std::move(rc));
  }
  const BhResult bh = benjamini_hochberg(pvals, q);
  for (std::size_t i = 0; i < out.regions.size(); ++i) {
    out.regions[i].adjusted_p = bh.adjusted[i];
    out.regions[i].significant = bh.rejected[i];
  }
  out.ncr = ncr(original, anon);
  for (const auto& w : out.ncr.warnings) out.warnings.push_back(w);
  return out;
}

TradeoffPoint tradeoff_point(const std::string& tool, const NcrResult& volumes, const ReidSummary& reid) {
  return {tool, volumes.ncr, volumes.spread, reid.mean_inverse_distance, reid.std_inverse_distance};
}

}  // namespace reface
