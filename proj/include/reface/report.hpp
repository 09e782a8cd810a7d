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

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reface/reid.hpp"
#include "reface/repeatability.hpp"

namespace reface {

/// Results for one de-identification tool. Blocks that could not be
/// computed stay empty and are named in `missing`.
struct ToolReport {
  std::string tool;
  std::optional<VolumeComparison> volumes;
  std::optional<ReidSummary> reid;
  std::optional<double> mean_dice;
  std::optional<TradeoffPoint> tradeoff;
  std::vector<std::string> missing;
};

struct EvaluationReport {
  nlohmann::json config = nlohmann::json::object();
  std::vector<ToolReport> tools;
};

nlohmann::json to_json(const WilcoxonResult& r);
nlohmann::json to_json(const BlandAltman& ba);
nlohmann::json to_json(const NcrResult& r);
nlohmann::json to_json(const VolumeComparison& c);
nlohmann::json to_json(const ReidSummary& s);
nlohmann::json to_json(const TradeoffPoint& p);
nlohmann::json to_json(const ToolReport& t);
nlohmann::json to_json(const EvaluationReport& r);

/// Pretty-printed JSON followed by a newline.
std::string json_text(const nlohmann::json& j);

std::string tradeoff_csv(const std::vector<TradeoffPoint>& points);

/// Fills each tool's trade-off point from its volume and re-id blocks.
void attach_tradeoff_points(EvaluationReport& report);

struct PlotFrame {
  double width = 640, height = 480;
  double left = 70, right = 20, top = 40, bottom = 60;
};

/// Maps data ranges onto the inner plot box; y grows upward in data space
/// and downward in SVG space.
struct AxisMap {
  double x0, x1, y0, y1;
  PlotFrame frame;

  double px(double x) const;
  double py(double y) const;
};

/// Data range padded by 5% (or +/-1 when degenerate).
std::pair<double, double> padded_range(double lo, double hi);

struct PlotMarker {
  std::string label;
  double x, y;  // SVG coordinates
};

std::string bland_altman_svg(const BlandAltman& ba, const std::string& title);

/// Marker positions of the trade-off plot, in input order.
std::vector<PlotMarker> tradeoff_layout(const std::vector<TradeoffPoint>& points, const PlotFrame& frame = {});
std::string tradeoff_svg(const std::vector<TradeoffPoint>& points, const std::string& title = "Trade-off");

struct SvgFile {
  std::string name;
  std::string content;
};

/// Bland-Altman plot per tool and region plus one trade-off plot. Fails
/// with PartialReport naming every incomplete block.
std::vector<SvgFile> emit_svg_plots(const EvaluationReport& report);

}  // namespace reface
