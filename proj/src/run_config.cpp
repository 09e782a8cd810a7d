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

#include "reface/run_config.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "reface/error.hpp"

namespace reface {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"paths", {"weights", "report_dir"}},
      {"reface", {"dropout_p", "seed", "tile_shape", "winsorize_cap", "threads"}},
      {"train", {"epochs", "validate_every", "base_lr", "cosine_decay_period", "lambda", "cap_percentile"}},
      {"generator", {"levels", "base_channels", "residual_blocks", "kernel"}},
      {"discriminator", {"layers", "base_channels"}},
      {"report", {"threshold", "scale"}},
  };
  return keys;
}

template <typename T>
T get(const pt::ptree& tree, const std::string& key, T fallback) {
  const auto v = tree.get_optional<std::string>(key);
  if (!v) return fallback;
  std::istringstream in(*v);
  T out{};
  in >> out;
  if (in.fail() || !(in >> std::ws).eof()) fail(ErrorCode::InvalidArgument, "config " + key + ": bad value '" + *v + "'");
  return out;
}

}  // namespace

Dims3 parse_dims(const std::string& text) {
  std::string s = text;
  for (char& c : s)
    if (c == 'x' || c == ',') c = ' ';
  std::istringstream in(s);
  std::vector<long long> v;
  long long x = 0;
  while (in >> x) v.push_back(x);
  if (!in.eof() || (v.size() != 1 && v.size() != 3))
    fail(ErrorCode::InvalidArgument, "bad dimensions '" + text + "' (use N or NxNxN)");
  if (v.size() == 1) v = {v[0], v[0], v[0]};
  for (auto e : v)
    if (e < 1) fail(ErrorCode::InvalidArgument, "dimensions must be positive: '" + text + "'");
  return {v[0], v[1], v[2]};
}

void RunConfig::validate() const {
  if (weights && !std::filesystem::exists(*weights))
    fail(ErrorCode::InvalidArgument, "weights file not found: " + weights->string());
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail(ErrorCode::InvalidArgument, "dropout_p must be in [0, 1)");
  if (threads < 0) fail(ErrorCode::InvalidArgument, "threads must be >= 0");
  if (winsorize_cap && !(*winsorize_cap > 0.0)) fail(ErrorCode::InvalidArgument, "winsorize_cap must be positive");
  if (!(reid_threshold > 0.0 && reid_threshold <= 2.0))
    fail(ErrorCode::InvalidArgument, "re-id threshold must be in (0, 2]");
  if (!(cap_percentile > 0.0 && cap_percentile <= 100.0))
    fail(ErrorCode::InvalidArgument, "cap_percentile must be in (0, 100]");
  generator.validate();
  discriminator.validate();
  schedule.validate();
}

int RunConfig::effective_threads() const {
  if (threads > 0) return threads;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["weights"] = weights ? nlohmann::json(weights->generic_string()) : nlohmann::json(nullptr);
  j["dropout_p"] = dropout_p;
  j["seed"] = seed;
  j["tile_shape"] = tile_shape ? nlohmann::json(*tile_shape) : nlohmann::json(nullptr);
  j["winsorize_cap"] = winsorize_cap ? nlohmann::json(*winsorize_cap) : nlohmann::json(nullptr);
  j["reid_threshold"] = reid_threshold;
  j["scale"] = reface::to_string(scale);
  j["cap_percentile"] = cap_percentile;
  j["generator"] = reface::to_json(generator);
  j["discriminator"] = reface::to_json(discriminator);
  j["schedule"] = {{"epochs", schedule.epochs},
                   {"validate_every", schedule.validate_every},
                   {"base_lr", schedule.base_lr},
                   {"cosine_decay_period", schedule.cosine_decay_period},
                   {"lambda", schedule.lambda},
                   {"seed", schedule.seed}};
  return j;
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::ParseError, std::string("config: ") + e.what());
  }
  // Inline comments: a ';' or '#' preceded by whitespace ends the value.
  for (auto& [section, body] : tree) {
    for (auto& [key, value] : body) {
      std::string v = value.data();
      for (std::size_t i = 1; i < v.size(); ++i) {
        if ((v[i] == ';' || v[i] == '#') && std::isspace(static_cast<unsigned char>(v[i - 1]))) {
          v.erase(i);
          break;
        }
      }
      while (!v.empty() && std::isspace(static_cast<unsigned char>(v.back()))) v.pop_back();
      value.put_value(v);
    }
  }
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) fail(ErrorCode::InvalidArgument, "config: unknown section [" + section + "]");
    if (!body.data().empty()) fail(ErrorCode::InvalidArgument, "config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body)
      if (!it->second.count(key)) fail(ErrorCode::InvalidArgument, "config: unknown key " + section + "." + key);
  }

  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };

  RunConfig c;
  if (auto v = tree.get_optional<std::string>("paths.weights")) c.weights = resolve(*v);
  if (auto v = tree.get_optional<std::string>("paths.report_dir")) c.report_dir = resolve(*v);
  c.dropout_p = get(tree, "reface.dropout_p", c.dropout_p);
  c.seed = get(tree, "reface.seed", c.seed);
  if (auto v = tree.get_optional<std::string>("reface.tile_shape")) c.tile_shape = parse_dims(*v);
  if (tree.get_optional<std::string>("reface.winsorize_cap")) c.winsorize_cap = get(tree, "reface.winsorize_cap", 0.0);
  c.threads = get(tree, "reface.threads", c.threads);
  c.schedule.epochs = get(tree, "train.epochs", c.schedule.epochs);
  c.schedule.validate_every = get(tree, "train.validate_every", c.schedule.validate_every);
  c.schedule.base_lr = get(tree, "train.base_lr", c.schedule.base_lr);
  c.schedule.cosine_decay_period = get(tree, "train.cosine_decay_period", c.schedule.cosine_decay_period);
  c.schedule.lambda = get(tree, "train.lambda", c.schedule.lambda);
  c.cap_percentile = get(tree, "train.cap_percentile", c.cap_percentile);
  c.schedule.seed = c.seed;
  c.generator.levels = get(tree, "generator.levels", c.generator.levels);
  c.generator.base_channels = get(tree, "generator.base_channels", c.generator.base_channels);
  c.generator.bottleneck_res_blocks = get(tree, "generator.residual_blocks", c.generator.bottleneck_res_blocks);
  c.generator.kernel = get(tree, "generator.kernel", c.generator.kernel);
  c.discriminator.layers = get(tree, "discriminator.layers", c.discriminator.layers);
  c.discriminator.base_channels = get(tree, "discriminator.base_channels", c.discriminator.base_channels);
  c.reid_threshold = get(tree, "report.threshold", c.reid_threshold);
  if (auto v = tree.get_optional<std::string>("report.scale")) c.scale = parse_distance_scale(*v);
  c.generator.dropout_p = c.dropout_p;
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidArgument, "config file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = parse_run_config(ss.str(), path.parent_path());
  c.validate();
  return c;
}

}  // namespace reface
