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

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the code paths it is used to check.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace oracle {

// Writes a NIfTI-1 single-file byte stream by poking fields at their
// documented byte offsets (no header struct involved).
struct RawNiftiWriter {
  std::vector<std::uint8_t> bytes = std::vector<std::uint8_t>(352, 0);
  bool big_endian = false;

  template <typename T>
  void put(std::size_t offset, T value) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[offset + i] = big_endian ? raw[sizeof(T) - 1 - i] : raw[i];
  }

  RawNiftiWriter(std::array<int, 3> dims, int datatype, int bitpix, float slope = 1.0f, float inter = 0.0f,
                 bool be = false)
      : big_endian(be) {
    put<std::int32_t>(0, 348);
    put<std::int16_t>(40, 3);
    for (int i = 0; i < 3; ++i) put<std::int16_t>(42 + 2 * i, static_cast<std::int16_t>(dims[i]));
    for (int i = 3; i < 7; ++i) put<std::int16_t>(42 + 2 * i, 1);
    put<std::int16_t>(70, static_cast<std::int16_t>(datatype));
    put<std::int16_t>(72, static_cast<std::int16_t>(bitpix));
    put<float>(76, 1.0f);  // pixdim[0] / qfac
    for (int i = 1; i < 4; ++i) put<float>(76 + 4 * i, 1.0f);
    put<float>(108, 352.0f);
    put<float>(112, slope);
    put<float>(116, inter);
    std::memcpy(bytes.data() + 344, "n+1\0", 4);
  }

  void set_sform(const std::array<std::array<float, 4>, 3>& rows) {
    put<std::int16_t>(254, 1);  // sform_code
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) put<float>(280 + 16 * r + 4 * c, rows[r][c]);
  }

  template <typename T>
  void append(const std::vector<T>& values) {
    for (const T& v : values) {
      const std::size_t at = bytes.size();
      bytes.resize(at + sizeof(T));
      put<T>(at, v);
    }
  }
};

// Naive 3D cross-correlation on (C, D, H, W) buffers.
inline std::vector<double> conv3d(std::span<const double> x, std::array<int, 4> xs, std::span<const double> w,
                                  int cout, int k, int stride, int pad, std::array<int, 3>& out_spatial) {
  const int cin = xs[0], d = xs[1], h = xs[2], wd = xs[3];
  const int od = (d + 2 * pad - k) / stride + 1, oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  out_spatial = {od, oh, ow};
  std::vector<double> y(static_cast<std::size_t>(cout) * od * oh * ow, 0.0);
  for (int co = 0; co < cout; ++co)
    for (int z = 0; z < od; ++z)
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx) {
          double acc = 0.0;
          for (int ci = 0; ci < cin; ++ci)
            for (int kz = 0; kz < k; ++kz)
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  const int iz = z * stride - pad + kz, iy = yy * stride - pad + ky, ix = xx * stride - pad + kx;
                  if (iz < 0 || iy < 0 || ix < 0 || iz >= d || iy >= h || ix >= wd) continue;
                  acc += x[((static_cast<std::size_t>(ci) * d + iz) * h + iy) * wd + ix] *
                         w[(((static_cast<std::size_t>(co) * cin + ci) * k + kz) * k + ky) * k + kx];
                }
          y[((static_cast<std::size_t>(co) * od + z) * oh + yy) * ow + xx] = acc;
        }
  return y;
}

// Naive transposed convolution by scattering each input voxel through the
// kernel; weight layout (Cin, Cout, k, k, k).
inline std::vector<double> conv_transpose3d(std::span<const double> x, std::array<int, 4> xs,
                                            std::span<const double> w, int cout, int k, int stride, int pad,
                                            std::array<int, 3>& out_spatial) {
  const int cin = xs[0], d = xs[1], h = xs[2], wd = xs[3];
  const int od = (d - 1) * stride - 2 * pad + k, oh = (h - 1) * stride - 2 * pad + k, ow = (wd - 1) * stride - 2 * pad + k;
  out_spatial = {od, oh, ow};
  std::vector<double> y(static_cast<std::size_t>(cout) * od * oh * ow, 0.0);
  for (int ci = 0; ci < cin; ++ci)
    for (int z = 0; z < d; ++z)
      for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < wd; ++xx) {
          const double v = x[((static_cast<std::size_t>(ci) * d + z) * h + yy) * wd + xx];
          for (int co = 0; co < cout; ++co)
            for (int kz = 0; kz < k; ++kz)
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  const int oz = z * stride - pad + kz, oy = yy * stride - pad + ky, ox = xx * stride - pad + kx;
                  if (oz < 0 || oy < 0 || ox < 0 || oz >= od || oy >= oh || ox >= ow) continue;
                  y[((static_cast<std::size_t>(co) * od + oz) * oh + oy) * ow + ox] +=
                      v * w[(((static_cast<std::size_t>(ci) * cout + co) * k + kz) * k + ky) * k + kx];
                }
        }
  return y;
}

// Brute-force binary morphology with the 3x3x3 cube on a dense grid stored
// axis-0 fastest. Out-of-grid neighbours are ignored (dilation) or count as
// set (erosion).
inline std::vector<std::uint8_t> morph(const std::vector<std::uint8_t>& m, std::array<int, 3> d, bool dilate) {
  std::vector<std::uint8_t> out(m.size(), 0);
  auto at = [&](int i, int j, int k) { return m[static_cast<std::size_t>(i + d[0] * (j + d[1] * k))]; };
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        bool any = false, all = true;
        for (int dk = -1; dk <= 1; ++dk)
          for (int dj = -1; dj <= 1; ++dj)
            for (int di = -1; di <= 1; ++di) {
              const int a = i + di, b = j + dj, c = k + dk;
              if (a < 0 || b < 0 || c < 0 || a >= d[0] || b >= d[1] || c >= d[2]) continue;
              any = any || at(a, b, c);
              all = all && at(a, b, c);
            }
        out[static_cast<std::size_t>(i + d[0] * (j + d[1] * k))] = dilate ? any : all;
      }
  return out;
}

inline std::vector<std::uint8_t> brute_closing(const std::vector<std::uint8_t>& m, std::array<int, 3> d, int radius) {
  std::vector<std::uint8_t> x = m;
  for (int r = 0; r < radius; ++r) x = morph(x, d, true);
  for (int r = 0; r < radius; ++r) x = morph(x, d, false);
  return x;
}

// Midranks of |values| (1-based), computed by pairwise comparison counting.
inline std::vector<double> abs_midranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (std::abs(v[j]) < std::abs(v[i])) ++less;
      if (std::abs(v[j]) == std::abs(v[i])) ++equal;
    }
    r[i] = less + (equal + 1) / 2.0;
  }
  return r;
}

// Two-sided exact Wilcoxon signed-rank p by enumerating all 2^n sign
// patterns of the non-zero differences.
inline double wilcoxon_enumerate(const std::vector<double>& diffs) {
  std::vector<double> d;
  for (double x : diffs)
    if (x != 0) d.push_back(x);
  const std::vector<double> r = abs_midranks(d);
  const std::size_t n = d.size();
  double total = 0, observed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += r[i];
    if (d[i] > 0) observed += r[i];
  }
  const double centre = total / 2.0;
  const double dev = std::abs(observed - centre);
  std::uint64_t hits = 0;
  const std::uint64_t patterns = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < patterns; ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (std::uint64_t{1} << i)) w += r[i];
    if (std::abs(w - centre) >= dev - 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(patterns);
}

// Benjamini-Hochberg adjusted p straight from the definition
// adj_i = min_{j : p_j >= p_i} min(1, p_j * m / rank_j).
inline std::vector<double> bh_definition(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<double> adj(m, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    double best = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      // rank_j counts values strictly below p_j plus ties broken by index.
      std::size_t rank = 1;
      for (std::size_t t = 0; t < m; ++t)
        if (p[t] < p[j] || (p[t] == p[j] && t < j)) ++rank;
      std::size_t rank_i = 1;
      for (std::size_t t = 0; t < m; ++t)
        if (p[t] < p[i] || (p[t] == p[i] && t < i)) ++rank_i;
      if (rank >= rank_i) best = std::min(best, p[j] * static_cast<double>(m) / static_cast<double>(rank));
    }
    adj[i] = std::min(1.0, best);
  }
  return adj;
}

}  // namespace oracle
