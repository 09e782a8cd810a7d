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

#include "reface/report.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>

#include "reface/error.hpp"

namespace reface {

namespace {

using nlohmann::json;

std::string fmt4(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  // Avoid "-0.0000" so that mirrored layouts print identically.
  if (std::string(buf) == "-0.0000") return "0.0000";
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

class Svg {
 public:
  explicit Svg(const PlotFrame& f) : f_(f) {
    body_ += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt4(f.width) + "\" height=\"" +
             fmt4(f.height) + "\" viewBox=\"0 0 " + fmt4(f.width) + " " + fmt4(f.height) + "\">\n";
    rect(0, 0, f.width, f.height, "fill=\"white\"");
  }

  void rect(double x, double y, double w, double h, const std::string& style) {
    body_ += "<rect x=\"" + fmt4(x) + "\" y=\"" + fmt4(y) + "\" width=\"" + fmt4(w) + "\" height=\"" + fmt4(h) +
             "\" " + style + "/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& style) {
    body_ += "<line x1=\"" + fmt4(x1) + "\" y1=\"" + fmt4(y1) + "\" x2=\"" + fmt4(x2) + "\" y2=\"" + fmt4(y2) +
             "\" " + style + "/>\n";
  }
  void circle(double x, double y, double r, const std::string& style) {
    body_ += "<circle cx=\"" + fmt4(x) + "\" cy=\"" + fmt4(y) + "\" r=\"" + fmt4(r) + "\" " + style + "/>\n";
  }
  void text(double x, double y, const std::string& s, const std::string& style) {
    body_ += "<text x=\"" + fmt4(x) + "\" y=\"" + fmt4(y) + "\" " + style + ">" + xml_escape(s) + "</text>\n";
  }

  void axes(const AxisMap& m, const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    const PlotFrame& f = f_;
    rect(f.left, f.top, f.width - f.left - f.right, f.height - f.top - f.bottom,
         "fill=\"none\" stroke=\"black\" stroke-width=\"1\"");
    text(f.width / 2, f.top / 2 + 6, title, "font-size=\"16\" text-anchor=\"middle\"");
    text(f.width / 2, f.height - 15, xlabel, "font-size=\"12\" text-anchor=\"middle\"");
    text(18, f.height / 2, ylabel,
         "font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 18 " + fmt4(f.height / 2) + ")\"");
    for (int i = 0; i <= 4; ++i) {
      const double xv = m.x0 + (m.x1 - m.x0) * i / 4.0;
      const double yv = m.y0 + (m.y1 - m.y0) * i / 4.0;
      line(m.px(xv), f.height - f.bottom, m.px(xv), f.height - f.bottom + 5, "stroke=\"black\"");
      text(m.px(xv), f.height - f.bottom + 18, fmt4(xv), "font-size=\"10\" text-anchor=\"middle\"");
      line(f.left - 5, m.py(yv), f.left, m.py(yv), "stroke=\"black\"");
      text(f.left - 8, m.py(yv) + 3, fmt4(yv), "font-size=\"10\" text-anchor=\"end\"");
    }
  }

  std::string finish() { return body_ + "</svg>\n"; }

 private:
  PlotFrame f_;
  std::string body_;
};

json string_list(const std::vector<std::string>& v) { return json(v); }

}  // namespace

json to_json(const WilcoxonResult& r) {
  return {{"p_value", r.p_value}, {"w_plus", r.w_plus},   {"n_used", r.n_used},
          {"exact", r.exact},     {"degenerate_pairs", r.degenerate}};
}

json to_json(const BlandAltman& ba) {
  json pts = json::array();
  for (const auto& [m, d] : ba.points) pts.push_back({m, d});
  return {{"mean_diff", ba.mean_diff}, {"sd_diff", ba.sd_diff}, {"loa_low", ba.loa_low},
          {"loa_high", ba.loa_high},   {"points", pts}};
}

json to_json(const NcrResult& r) {
  json regions = json::object();
  for (const auto& [name, cr] : r.region_cr) regions[name] = cr;
  return {{"ncr", r.ncr}, {"spread", r.spread}, {"region_cr", regions}, {"warnings", string_list(r.warnings)}};
}

json to_json(const VolumeComparison& c) {
  json regions = json::array();
  std::size_t significant = 0;
  for (const auto& r : c.regions) {
    significant += r.significant;
    json outliers = json::array();
    for (auto i : r.outliers) outliers.push_back(i);
    regions.push_back({{"region", r.region},
                       {"wilcoxon", to_json(r.wilcoxon)},
                       {"adjusted_p", r.adjusted_p},
                       {"significant", r.significant},
                       {"cr", r.cr},
                       {"bland_altman", to_json(r.bland_altman)},
                       {"outlier_rows", outliers}});
  }
  return {{"n_scans", c.n_scans},
          {"regions", regions},
          {"significant_regions", significant},
          {"ncr", to_json(c.ncr)},
          {"warnings", string_list(c.warnings)}};
}

json to_json(const ReidSummary& s) {
  json d = json::array();
  for (double x : s.distances) d.push_back(s.scaled(x));
  return {{"n_pairs", s.distances.size()},
          {"scale", to_string(s.scale)},
          {"threshold", s.threshold},
          {"mean_distance", s.scaled(s.mean_distance)},
          {"std_distance", s.scaled(s.std_distance)},
          {"pct_identifiable", s.pct_identifiable},
          {"mean_inverse_distance", s.mean_inverse_distance},
          {"std_inverse_distance", s.std_inverse_distance},
          {"inverse_count", s.inverse_count},
          {"identical_pairs", s.identical_pairs},
          {"distances", d},
          {"warnings", string_list(s.warnings)}};
}

json to_json(const TradeoffPoint& p) {
  return {{"tool", p.tool},
          {"ncr", p.ncr},
          {"ncr_spread", p.ncr_spread},
          {"mean_inverse_distance", p.mean_inverse_distance},
          {"inv_dist_spread", p.inv_dist_spread}};
}

json to_json(const ToolReport& t) {
  json j = {{"tool", t.tool}};
  j["volumes"] = t.volumes ? to_json(*t.volumes) : json(nullptr);
  j["reid"] = t.reid ? to_json(*t.reid) : json(nullptr);
  j["mean_dice"] = t.mean_dice ? json(*t.mean_dice) : json(nullptr);
  j["tradeoff"] = t.tradeoff ? to_json(*t.tradeoff) : json(nullptr);
  j["complete"] = t.missing.empty();
  j["missing"] = string_list(t.missing);
  return j;
}

json to_json(const EvaluationReport& r) {
  json tools = json::array();
  for (const auto& t : r.tools) tools.push_back(to_json(t));
  return {{"config", r.config}, {"tools", tools}};
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

std::string tradeoff_csv(const std::vector<TradeoffPoint>& points) {
  std::string out = "tool,ncr,ncr_spread,mean_inverse_distance,inv_dist_spread\n";
  char buf[160];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, ",%.10g,%.10g,%.10g,%.10g\n", p.ncr, p.ncr_spread, p.mean_inverse_distance,
                  p.inv_dist_spread);
    out += p.tool + buf;
  }
  return out;
}

void attach_tradeoff_points(EvaluationReport& report) {
  for (auto& t : report.tools)
    if (t.volumes && t.reid) t.tradeoff = tradeoff_point(t.tool, t.volumes->ncr, *t.reid);
}

double AxisMap::px(double x) const {
  return frame.left + (x - x0) / (x1 - x0) * (frame.width - frame.left - frame.right);
}

double AxisMap::py(double y) const {
  return frame.height - frame.bottom - (y - y0) / (y1 - y0) * (frame.height - frame.top - frame.bottom);
}

std::pair<double, double> padded_range(double lo, double hi) {
  if (!(hi > lo)) return {lo - 1.0, hi + 1.0};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::string bland_altman_svg(const BlandAltman& ba, const std::string& title) {
  if (ba.points.empty()) fail(ErrorCode::EmptyInput, "bland_altman_svg: no points");
  double xlo = ba.points[0].first, xhi = xlo;
  double ylo = std::min(ba.loa_low, ba.mean_diff), yhi = std::max(ba.loa_high, ba.mean_diff);
  for (const auto& [m, d] : ba.points) {
    xlo = std::min(xlo, m);
    xhi = std::max(xhi, m);
    ylo = std::min(ylo, d);
    yhi = std::max(yhi, d);
  }
  const PlotFrame frame;
  const auto [x0, x1] = padded_range(xlo, xhi);
  const auto [y0, y1] = padded_range(ylo, yhi);
  const AxisMap m{x0, x1, y0, y1, frame};
  Svg svg(frame);
  svg.axes(m, title, "Mean of original and anonymized", "Original - anonymized");
  const double left = frame.left, right = frame.width - frame.right;
  svg.line(left, m.py(ba.mean_diff), right, m.py(ba.mean_diff),
           "class=\"mean\" stroke=\"black\" stroke-width=\"1.5\"");
  svg.line(left, m.py(ba.loa_high), right, m.py(ba.loa_high),
           "class=\"loa-high\" stroke=\"gray\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"");
  svg.line(left, m.py(ba.loa_low), right, m.py(ba.loa_low),
           "class=\"loa-low\" stroke=\"gray\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"");
  for (const auto& [mean, d] : ba.points)
    svg.circle(m.px(mean), m.py(d), 3, "class=\"point\" fill=\"steelblue\" fill-opacity=\"0.7\"");
  return svg.finish();
}

namespace {

AxisMap tradeoff_axes(const std::vector<TradeoffPoint>& points, const PlotFrame& frame) {
  double xlo = points[0].ncr, xhi = xlo, ylo = points[0].mean_inverse_distance, yhi = ylo;
  for (const auto& p : points) {
    xlo = std::min(xlo, p.ncr - p.ncr_spread);
    xhi = std::max(xhi, p.ncr + p.ncr_spread);
    ylo = std::min(ylo, p.mean_inverse_distance - p.inv_dist_spread);
    yhi = std::max(yhi, p.mean_inverse_distance + p.inv_dist_spread);
  }
  const auto [x0, x1] = padded_range(xlo, xhi);
  const auto [y0, y1] = padded_range(ylo, yhi);
  return {x0, x1, y0, y1, frame};
}

}  // namespace

std::vector<PlotMarker> tradeoff_layout(const std::vector<TradeoffPoint>& points, const PlotFrame& frame) {
  if (points.empty()) fail(ErrorCode::EmptyInput, "tradeoff plot: no points");
  const AxisMap m = tradeoff_axes(points, frame);
  std::vector<PlotMarker> out;
  for (const auto& p : points) out.push_back({p.tool, m.px(p.ncr), m.py(p.mean_inverse_distance)});
  return out;
}

std::string tradeoff_svg(const std::vector<TradeoffPoint>& points, const std::string& title) {
  const PlotFrame frame;
  const std::vector<PlotMarker> markers = tradeoff_layout(points, frame);
  const AxisMap m = tradeoff_axes(points, frame);
  Svg svg(frame);
  svg.axes(m, title, "nCR", "Mean inverse face distance");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const TradeoffPoint& p = points[i];
    const PlotMarker& k = markers[i];
    const std::string whisker = "class=\"whisker\" stroke=\"black\" stroke-width=\"1\"";
    svg.line(m.px(p.ncr - p.ncr_spread), k.y, m.px(p.ncr + p.ncr_spread), k.y, whisker);
    svg.line(k.x, m.py(p.mean_inverse_distance - p.inv_dist_spread), k.x,
             m.py(p.mean_inverse_distance + p.inv_dist_spread), whisker);
    svg.circle(k.x, k.y, 5, "class=\"tool\" fill=\"firebrick\"");
    svg.text(k.x + 8, k.y - 8, p.tool, "font-size=\"11\"");
  }
  return svg.finish();
}

std::vector<SvgFile> emit_svg_plots(const EvaluationReport& report) {
  std::vector<std::string> missing;
  for (const auto& t : report.tools) {
    if (!t.volumes) missing.push_back(t.tool + ".volumes");
    if (!t.reid) missing.push_back(t.tool + ".reid");
  }
  if (report.tools.empty()) missing.push_back("tools");
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    fail(ErrorCode::PartialReport, "report incomplete: " + list);
  }
  std::vector<SvgFile> out;
  std::vector<TradeoffPoint> points;
  for (const auto& t : report.tools) {
    for (const auto& r : t.volumes->regions)
      out.push_back({"bland_altman_" + slug(t.tool) + "_" + slug(r.region) + ".svg",
                     bland_altman_svg(r.bland_altman, t.tool + ": " + r.region)});
    points.push_back(t.tradeoff ? *t.tradeoff : tradeoff_point(t.tool, t.volumes->ncr, *t.reid));
  }
  out.push_back({"tradeoff.svg", tradeoff_svg(points)});
  return out;
}

}  // namespace reface
