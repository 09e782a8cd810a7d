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

#include "reface/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "csv.hpp"
#include "reface/face_render.hpp"
#include "reface/model_weights.hpp"
#include "reface/nifti.hpp"
#include "reface/phantom.hpp"
#include "reface/reface.hpp"
#include "reface/reid.hpp"
#include "reface/repeatability.hpp"
#include "reface/report.hpp"
#include "reface/run_config.hpp"
#include "reface/training.hpp"
#include "reface/volume_ops.hpp"

namespace reface {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::UnsupportedDatatype:
    case ErrorCode::TruncatedFile:
    case ErrorCode::DegenerateAffine:
    case ErrorCode::EmptyInput:
    case ErrorCode::VolumeTooLarge:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::MissingTensor:
    case ErrorCode::PartialReport:
    case ErrorCode::InvalidArgument:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

namespace {

constexpr const char* kVersion = "0.1.0";

[[noreturn]] void usage(const std::string& msg) { fail(ErrorCode::InvalidArgument, msg); }

void require_file(const fs::path& p, const std::string& flag) {
  if (!fs::is_regular_file(p)) usage(flag + ": file not found: " + p.string());
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) fail(ErrorCode::IoError, "cannot write " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", s);
  return buf;
}

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

// `tool=path` or a bare path whose stem names the tool.
std::pair<std::string, fs::path> tool_path(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) return {fs::path(spec).stem().string(), fs::path(spec)};
  if (eq == 0) usage("--anonymized: empty tool name in '" + spec + "'");
  return {spec.substr(0, eq), fs::path(spec.substr(eq + 1))};
}

NiftiImage mask_image(const BinaryMask& m, const Affine& affine) {
  FloatGrid g(m.dims);
  for (std::size_t i = 0; i < m.size(); ++i) g.data[i] = m.data[i];
  return make_image(std::move(g), affine, nifti_type::kUint8);
}

BinaryMask nonzero_mask(const NiftiImage& img) {
  BinaryMask m(img.dims());
  for (std::size_t i = 0; i < img.size(); ++i) m.data[i] = img.data.data[i] != 0.0f;
  return m;
}

NiftiImage read_asl(const fs::path& p, std::ostream& err) {
  std::vector<std::string> warnings;
  NiftiImage img = reorient_asl(read_nifti(p), &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  return img;
}

// Options shared by commands that read the run configuration.
struct ConfigFlags {
  std::string config;
  std::optional<double> dropout;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> tile;
  std::optional<double> cap;
  std::optional<double> threshold;
  std::optional<std::string> scale;
  std::optional<int> epochs, validate_every, cosine_period;
  std::optional<double> lr, lambda, cap_percentile;
  std::optional<int> levels, base_channels, res_blocks, kernel, disc_layers, disc_base;

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : load_run_config(config);
    if (dropout) c.dropout_p = *dropout;
    if (seed) c.seed = *seed;
    if (threads) c.threads = *threads;
    if (tile) c.tile_shape = parse_dims(*tile);
    if (cap) c.winsorize_cap = *cap;
    if (threshold) c.reid_threshold = *threshold;
    if (scale) c.scale = parse_distance_scale(*scale);
    if (epochs) c.schedule.epochs = *epochs;
    if (validate_every) c.schedule.validate_every = *validate_every;
    if (cosine_period) c.schedule.cosine_decay_period = *cosine_period;
    if (lr) c.schedule.base_lr = *lr;
    if (lambda) c.schedule.lambda = *lambda;
    if (cap_percentile) c.cap_percentile = *cap_percentile;
    if (levels) c.generator.levels = *levels;
    if (base_channels) c.generator.base_channels = *base_channels;
    if (res_blocks) c.generator.bottleneck_res_blocks = *res_blocks;
    if (kernel) c.generator.kernel = *kernel;
    if (disc_layers) c.discriminator.layers = *disc_layers;
    if (disc_base) c.discriminator.base_channels = *disc_base;
    c.schedule.seed = c.seed;
    c.generator.dropout_p = c.dropout_p;
    c.validate();
    return c;
  }
};

void add_config_flag(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--config", f.config, "INI run configuration");
}
void add_seed_flag(CLI::App* cmd, ConfigFlags& f) { cmd->add_option("--seed", f.seed, "RNG seed"); }
void add_architecture_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--levels", f.levels, "generator encoder levels");
  cmd->add_option("--base-channels", f.base_channels, "generator channels at level 0");
  cmd->add_option("--res-blocks", f.res_blocks, "bottleneck residual blocks");
  cmd->add_option("--kernel", f.kernel, "down/up-sampling kernel size");
  cmd->add_option("--disc-layers", f.disc_layers, "discriminator stride-2 layers");
  cmd->add_option("--disc-base", f.disc_base, "discriminator channels at layer 0");
}
void add_report_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--threshold", f.threshold, "re-identification distance threshold");
  cmd->add_option("--scale", f.scale, "distance reporting scale: raw or x100");
}

// ---------------------------------------------------------------------------

struct RefaceArgs {
  std::string input, weights, output;
  ConfigFlags cfg;
};

void cmd_reface(const RefaceArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig c = a.cfg.resolve();
  require_file(a.input, "--input");
  if (!a.weights.empty()) {
    require_file(a.weights, "--weights");
    c.weights = a.weights;
  }
  if (!c.weights) usage("--weights: required (flag or [paths] weights in --config)");
  require_file(*c.weights, "--weights");

  Stopwatch sw;
  const NiftiImage defaced = read_asl(a.input, err);
  const ModelWeights w = read_weights(*c.weights);
  const double t_read = sw.lap();

  RefaceOptions opt;
  opt.dropout_p = c.dropout_p;
  opt.seed = c.seed;
  opt.threads = c.effective_threads();
  opt.winsorize_cap = c.winsorize_cap;
  opt.tile_shape = c.tile_shape;
  StageTimings timings;
  const NiftiImage result = reface_image(defaced, w, inference_config(w, c.generator), opt, &timings);
  sw.lap();
  write_nifti(result, a.output);
  const double t_write = sw.lap();

  double total = t_read + t_write;
  err << "stage,seconds\n";
  err << "read," << fmt_seconds(t_read) << "\n";
  for (const auto& [stage, s] : timings) {
    err << stage << "," << fmt_seconds(s) << "\n";
    total += s;
  }
  err << "write," << fmt_seconds(t_write) << "\n";
  err << "total," << fmt_seconds(total) << "\n";
  out << a.output << "\n";
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string manifest, out_dir;
  ConfigFlags cfg;
};

std::vector<std::pair<fs::path, fs::path>> read_manifest(const fs::path& path) {
  require_file(path, "--pairs-manifest");
  const std::string text = read_text(path);
  std::vector<std::pair<fs::path, fs::path>> pairs;
  for (const auto& [no, line] : csv::lines(text)) {
    const auto f = csv::split(line);
    if (pairs.empty() && f.size() == 2 && f[0] == "defaced" && f[1] == "original") continue;
    if (f.size() != 2 || f[0].empty() || f[1].empty())
      usage("--pairs-manifest: line " + std::to_string(no) + ": expected 'defaced,original'");
    auto resolve = [&](const std::string& s) {
      fs::path p(s);
      return p.is_relative() ? path.parent_path() / p : p;
    };
    pairs.emplace_back(resolve(f[0]), resolve(f[1]));
  }
  if (pairs.empty()) usage("--pairs-manifest: no training pairs listed");
  for (const auto& [d, o] : pairs) {
    require_file(d, "--pairs-manifest");
    require_file(o, "--pairs-manifest");
  }
  return pairs;
}

void cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig c = a.cfg.resolve();
  const auto manifest = read_manifest(a.manifest);
  std::vector<TrainingPair> pairs;
  for (const auto& [d, o] : manifest) pairs.push_back({read_asl(d, err), read_asl(o, err)});

  TrainOptions opt;
  opt.tile_shape = c.tile_shape.value_or(Dims3{128, 128, 128});
  opt.cap_percentile = c.cap_percentile;
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  opt.on_checkpoint = [&](const Checkpoint& cp) {
    const fs::path p = dir / (cp.name + ".rfkw");
    write_weights(cp.weights, p);
    out << p.string() << "\n";
  };
  const TrainResult r = train(pairs, c.generator, c.discriminator, c.schedule, opt);
  write_text(dir / "loss_log.csv", loss_log_csv(r.log));

  json echo = {{"command", "train"}, {"version", kVersion}, {"config", c.to_json()}};
  echo["config"]["tile_shape"] = opt.tile_shape;
  echo["pairs"] = json::array();
  for (const auto& [d, o] : manifest) echo["pairs"].push_back({d.generic_string(), o.generic_string()});
  echo["winsorize_cap"] = r.winsorize_cap;
  echo["iterations"] = r.log.size();
  write_text(dir / "train_config.json", json_text(echo));
}

// ---------------------------------------------------------------------------

struct RenderArgs {
  std::string input, output;
  std::optional<double> threshold;
  bool candidates = false;
  bool obj = false;
  int width = 512, height = 512;
  double sigma = 1.0;
};

void cmd_render(const RenderArgs& a, std::ostream& out, std::ostream& err) {
  require_file(a.input, "--input");
  if (a.threshold.has_value() == a.candidates) usage("render-face: pass exactly one of --threshold or --candidates");
  if (!(a.sigma > 0)) usage("--sigma: must be positive");
  RenderParams params;
  params.width = a.width;
  params.height = a.height;
  params.validate();
  const NiftiImage pre = preprocess_for_render(read_asl(a.input, err), a.sigma);
  const fs::path output(a.output);
  if (output.has_parent_path()) fs::create_directories(output.parent_path());

  auto emit = [&](const fs::path& png, const TriMesh& mesh, const Image2D& image) {
    write_png(image, png);
    out << png.string() << "\n";
    if (a.obj) {
      fs::path obj = png;
      obj.replace_extension(".obj");
      write_obj(mesh, obj);
      out << obj.string() << "\n";
    }
  };

  if (a.threshold) {
    params.frame = volume_world_box(pre);
    const TriMesh mesh = marching_cubes(pre, *a.threshold);
    emit(output, mesh, render_frontal(mesh, params));
    return;
  }
  const fs::path stem = output.parent_path() / output.stem();
  for (const CandidateRender& r : candidate_renders(pre, params))
    emit(fs::path(stem.string() + r.suffix + ".png"), r.mesh, r.image);
}

// ---------------------------------------------------------------------------

struct VolumesArgs {
  std::string original, out_dir;
  std::vector<std::string> anonymized;
  double q = 0.05;
  ConfigFlags cfg;
};

std::vector<std::pair<std::string, RegionVolumeTable>> read_tool_tables(const std::vector<std::string>& specs) {
  std::vector<std::pair<std::string, RegionVolumeTable>> out;
  for (const auto& s : specs) {
    const auto [tool, path] = tool_path(s);
    require_file(path, "--anonymized");
    for (const auto& [t, _] : out)
      if (t == tool) usage("--anonymized: tool '" + tool + "' given twice");
    RegionVolumeTable table = read_region_volumes(path);
    table.source = tool;
    out.emplace_back(tool, std::move(table));
  }
  return out;
}

json bh_echo(double q) { return {{"fdr_q", q}, {"cr_z", 1.96}}; }

void cmd_volumes(const VolumesArgs& a, std::ostream& out) {
  const RunConfig c = a.cfg.resolve();
  if (!(a.q > 0 && a.q < 1)) usage("--q: must be in (0, 1)");
  require_file(a.original, "--original");
  const RegionVolumeTable orig = read_region_volumes(a.original);
  const auto tools = read_tool_tables(a.anonymized);
  const fs::path dir(a.out_dir.empty() ? c.report_dir.value_or(".") : fs::path(a.out_dir));

  json report = {{"command", "evaluate volumes"}, {"version", kVersion}};
  report["config"] = bh_echo(a.q);
  report["config"]["original"] = a.original;
  report["tools"] = json::array();
  out << "tool,region,p_value,adjusted_p,cr,degenerate_pairs\n";
  for (const auto& [tool, table] : tools) {
    report["config"]["anonymized"][tool] = a.anonymized[report["tools"].size()];
    const VolumeComparison cmp = compare_volumes(orig, table, a.q);
    json block = to_json(cmp);
    block["tool"] = tool;
    report["tools"].push_back(block);
    for (const auto& r : cmp.regions) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.6g,%d", r.wilcoxon.p_value, r.adjusted_p, r.cr,
                    r.wilcoxon.degenerate ? 1 : 0);
      out << tool << "," << r.region << "," << buf << "\n";
      write_text(dir / ("bland_altman_" + tool + "_" + r.region + ".svg"),
                 bland_altman_svg(r.bland_altman, tool + ": " + r.region));
    }
  }
  write_text(dir / "volumes_report.json", json_text(report));
}

// ---------------------------------------------------------------------------

struct ReidArgs {
  std::string embeddings, output;
  std::vector<std::string> tools;
  ConfigFlags cfg;
};

void cmd_reid(const ReidArgs& a, std::ostream& out) {
  const RunConfig c = a.cfg.resolve();
  require_file(a.embeddings, "--embeddings");
  const auto records = read_embeddings(a.embeddings);
  const std::vector<std::string> tools = a.tools.empty() ? embedding_tools(records) : a.tools;
  if (tools.empty()) usage("--embeddings: no anonymized records");
  json report = {{"command", "evaluate reid"}, {"version", kVersion}};
  report["config"] = {{"embeddings", a.embeddings},
                      {"threshold", c.reid_threshold},
                      {"scale", to_string(c.scale)},
                      {"identical_distance", kIdenticalDistance}};
  report["tools"] = json::array();
  out << "tool,n_pairs,mean_distance,std_distance,pct_identifiable,mean_inverse_distance\n";
  for (const auto& tool : tools) {
    const ReidSummary s = reid_summary(pair_embeddings(records, tool), c.reid_threshold, c.scale);
    json block = to_json(s);
    block["tool"] = tool;
    report["tools"].push_back(block);
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g,%.6g,%.6g", s.distances.size(), s.scaled(s.mean_distance),
                  s.scaled(s.std_distance), s.pct_identifiable, s.mean_inverse_distance);
    out << tool << "," << buf << "\n";
  }
  write_text(a.output, json_text(report));
}

// ---------------------------------------------------------------------------

struct C1Args {
  std::string before, after, mask, output;
};

void cmd_c1(const C1Args& a, std::ostream& out) {
  require_file(a.before, "--before");
  require_file(a.after, "--after");
  require_file(a.mask, "--mask");
  const NiftiImage before = read_nifti(a.before);
  const NiftiImage after = read_nifti(a.after);
  const NiftiImage mask = read_nifti(a.mask);
  const C1Result r = check_c1(before, after, nonzero_mask(mask));
  out << "changed_voxels,passed\n" << r.changed_voxels << "," << (r.passed ? "true" : "false") << "\n";
  if (!a.output.empty()) {
    json report = {{"command", "evaluate c1"},
                   {"version", kVersion},
                   {"config", {{"before", a.before}, {"after", a.after}, {"mask", a.mask}}},
                   {"changed_voxels", r.changed_voxels},
                   {"mask_voxels", count_true(nonzero_mask(mask))},
                   {"passed", r.passed}};
    write_text(a.output, json_text(report));
  }
}

// ---------------------------------------------------------------------------

struct DiceArgs {
  std::string original, anonymized, labels, output;
};

void cmd_dice(const DiceArgs& a, std::ostream& out) {
  require_file(a.original, "--original");
  require_file(a.anonymized, "--anonymized");
  const NiftiImage x = read_nifti(a.original);
  const NiftiImage y = read_nifti(a.anonymized);
  std::vector<float> labels;
  if (!a.labels.empty()) {
    for (const auto& f : csv::split(a.labels)) labels.push_back(static_cast<float>(csv::to_double(f, 0)));
  } else {
    std::vector<float> seen(x.data.data.begin(), x.data.data.end());
    seen.insert(seen.end(), y.data.data.begin(), y.data.data.end());
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (float v : seen)
      if (v != 0.0f) labels.push_back(v);
  }
  if (labels.empty()) usage("--labels: no non-zero labels found");
  json per = json::object();
  out << "label,dice\n";
  for (float l : labels) {
    const double d = dice(x.data, y.data, l);
    char key[32];
    std::snprintf(key, sizeof key, "%g", l);
    per[key] = d;
    out << key << "," << d << "\n";
  }
  const double mean = mean_dice(x.data, y.data, labels);
  out << "mean," << mean << "\n";
  if (!a.output.empty()) {
    json report = {{"command", "evaluate dice"},
                   {"version", kVersion},
                   {"config", {{"original", a.original}, {"anonymized", a.anonymized}}},
                   {"dice", per},
                   {"mean_dice", mean}};
    write_text(a.output, json_text(report));
  }
}

// ---------------------------------------------------------------------------

struct TradeoffArgs {
  std::string original, embeddings, out_dir;
  std::vector<std::string> anonymized;
  double q = 0.05;
  ConfigFlags cfg;
};

void cmd_tradeoff(const TradeoffArgs& a, std::ostream& out) {
  const RunConfig c = a.cfg.resolve();
  require_file(a.original, "--original");
  require_file(a.embeddings, "--embeddings");
  const RegionVolumeTable orig = read_region_volumes(a.original);
  const auto tables = read_tool_tables(a.anonymized);
  const auto records = read_embeddings(a.embeddings);
  const fs::path dir(a.out_dir.empty() ? c.report_dir.value_or(".") : fs::path(a.out_dir));

  EvaluationReport report;
  report.config = {{"command", "evaluate tradeoff"},
                   {"version", kVersion},
                   {"original", a.original},
                   {"anonymized", a.anonymized},
                   {"embeddings", a.embeddings},
                   {"threshold", c.reid_threshold},
                   {"scale", to_string(c.scale)},
                   {"fdr_q", a.q}};
  std::vector<std::string> names;
  for (const auto& [tool, _] : tables) names.push_back(tool);
  for (const auto& tool : embedding_tools(records))
    if (std::find(names.begin(), names.end(), tool) == names.end()) names.push_back(tool);
  const std::vector<std::string> with_faces = embedding_tools(records);
  for (const auto& tool : names) {
    ToolReport t;
    t.tool = tool;
    for (const auto& [name, table] : tables)
      if (name == tool) t.volumes = compare_volumes(orig, table, a.q);
    if (std::find(with_faces.begin(), with_faces.end(), tool) != with_faces.end())
      t.reid = reid_summary(pair_embeddings(records, tool), c.reid_threshold, c.scale);
    if (!t.volumes) t.missing.push_back("volumes");
    if (!t.reid) t.missing.push_back("reid");
    report.tools.push_back(std::move(t));
  }
  attach_tradeoff_points(report);
  write_text(dir / "evaluation_report.json", json_text(to_json(report)));

  const std::vector<SvgFile> plots = emit_svg_plots(report);
  std::vector<TradeoffPoint> points;
  for (const auto& t : report.tools) points.push_back(*t.tradeoff);
  write_text(dir / "tradeoff.csv", tradeoff_csv(points));
  for (const auto& f : plots) write_text(dir / f.name, f.content);
  out << tradeoff_csv(points);
}

// ---------------------------------------------------------------------------

struct InitArgs {
  std::string output;
  ConfigFlags cfg;
};

void cmd_init(const InitArgs& a, std::ostream& out) {
  const RunConfig c = a.cfg.resolve();
  if (a.output.empty()) usage("--output: required");
  const GanTrainer trainer(c.generator, c.discriminator, c.schedule);
  json meta;
  meta["tile_shape"] = c.tile_shape.value_or(Dims3{128, 128, 128});
  if (c.winsorize_cap) meta["winsorize_cap"] = *c.winsorize_cap;
  meta["epoch"] = 0;
  meta["seed_lineage"] = {{"seed", c.seed}};
  write_weights(trainer.snapshot(meta), a.output);
  out << a.output << "\n";
}

// ---------------------------------------------------------------------------

struct PhantomArgs {
  std::string out_dir;
  std::string dims = "64";
  std::uint64_t seed = 0;
  double voxel_mm = 1.0;
};

void cmd_phantom(const PhantomArgs& a, std::ostream& out) {
  if (!(a.voxel_mm > 0)) usage("--voxel-mm: must be positive");
  const HeadPhantom p = make_head_phantom(parse_dims(a.dims), a.seed, a.voxel_mm);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  const std::vector<std::pair<std::string, NiftiImage>> files = {
      {"original.nii.gz", p.original},
      {"defaced.nii.gz", p.defaced},
      {"brain_mask.nii.gz", mask_image(p.brain, p.original.affine)},
      {"face_mask.nii.gz", mask_image(p.face_region, p.original.affine)},
  };
  for (const auto& [name, img] : files) {
    write_nifti(img, dir / name);
    out << (dir / name).string() << "\n";
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MRI refacing with a 3D conditional GAN and de-identification evaluation", "reface"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::function<void()> action;

  RefaceArgs ra;
  auto* reface_cmd = app.add_subcommand("reface", "replace the removed face of a defaced T1w volume");
  reface_cmd->add_option("--input", ra.input, "defaced NIfTI volume")->required();
  reface_cmd->add_option("--weights", ra.weights, "generator weights (.rfkw)");
  reface_cmd->add_option("--output", ra.output, "refaced NIfTI output")->required();
  reface_cmd->add_option("--dropout", ra.cfg.dropout, "test-time dropout probability");
  reface_cmd->add_option("--threads", ra.cfg.threads, "worker threads (default: all cores)");
  reface_cmd->add_option("--tile", ra.cfg.tile, "tile shape, e.g. 128 or 128x128x128");
  reface_cmd->add_option("--cap", ra.cfg.cap, "winsorize cap (default: from weights)");
  add_seed_flag(reface_cmd, ra.cfg);
  add_config_flag(reface_cmd, ra.cfg);
  reface_cmd->callback([&] { action = [&] { cmd_reface(ra, out, err); }; });

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train the generator/discriminator pair");
  train_cmd->add_option("--pairs-manifest", ta.manifest, "CSV of defaced,original paths")->required();
  train_cmd->add_option("--out-dir", ta.out_dir, "checkpoint and log directory")->required();
  train_cmd->add_option("--epochs", ta.cfg.epochs, "training epochs");
  train_cmd->add_option("--validate-every", ta.cfg.validate_every, "checkpoint interval in epochs");
  train_cmd->add_option("--lr", ta.cfg.lr, "base learning rate");
  train_cmd->add_option("--lambda", ta.cfg.lambda, "weight of the L1.5 term");
  train_cmd->add_option("--cosine-period", ta.cfg.cosine_period, "iterations per cosine restart");
  train_cmd->add_option("--cap-percentile", ta.cfg.cap_percentile, "percentile of scan maxima used as cap");
  train_cmd->add_option("--tile", ta.cfg.tile, "tile shape");
  train_cmd->add_option("--dropout", ta.cfg.dropout, "dropout probability");
  add_architecture_flags(train_cmd, ta.cfg);
  add_seed_flag(train_cmd, ta.cfg);
  add_config_flag(train_cmd, ta.cfg);
  train_cmd->callback([&] { action = [&] { cmd_train(ta, out, err); }; });

  RenderArgs rd;
  auto* render_cmd = app.add_subcommand("render-face", "render a frontal face image from a T1w volume");
  render_cmd->add_option("--input", rd.input, "NIfTI volume")->required();
  auto* thr = render_cmd->add_option("--threshold", rd.threshold, "isosurface threshold");
  auto* cand = render_cmd->add_flag("--candidates", rd.candidates, "render thresholds 80,90,100,110,120");
  thr->excludes(cand);
  render_cmd->add_option("--output", rd.output, "PNG path (candidates add _t<threshold>)")->required();
  render_cmd->add_option("--width", rd.width, "image width");
  render_cmd->add_option("--height", rd.height, "image height");
  render_cmd->add_option("--sigma", rd.sigma, "Gaussian smoothing sigma in voxels");
  render_cmd->add_flag("--obj", rd.obj, "also write the mesh as OBJ");
  render_cmd->callback([&] { action = [&] { cmd_render(rd, out, err); }; });

  auto* eval = app.add_subcommand("evaluate", "reproducibility and re-identification statistics");
  eval->require_subcommand(1);

  VolumesArgs va;
  auto* vol = eval->add_subcommand("volumes", "Wilcoxon/BH, CR, nCR and Bland-Altman per region");
  vol->add_option("--original", va.original, "region volume CSV of original scans")->required();
  vol->add_option("--anonymized", va.anonymized, "tool=CSV of anonymized scans (repeatable)")->required();
  vol->add_option("--out-dir", va.out_dir, "report directory");
  vol->add_option("--q", va.q, "false discovery rate");
  add_config_flag(vol, va.cfg);
  vol->callback([&] { action = [&] { cmd_volumes(va, out); }; });

  ReidArgs rr;
  auto* reid = eval->add_subcommand("reid", "face-distance re-identification summary");
  reid->add_option("--embeddings", rr.embeddings, "embedding CSV")->required();
  reid->add_option("--tool", rr.tools, "restrict to these tools (repeatable)");
  reid->add_option("--output", rr.output, "JSON report")->required();
  add_report_flags(reid, rr.cfg);
  add_config_flag(reid, rr.cfg);
  reid->callback([&] { action = [&] { cmd_reid(rr, out); }; });

  C1Args ca;
  auto* c1 = eval->add_subcommand("c1", "count changed voxels inside a brain mask");
  c1->add_option("--before", ca.before, "original NIfTI")->required();
  c1->add_option("--after", ca.after, "anonymized NIfTI")->required();
  c1->add_option("--mask", ca.mask, "brain mask NIfTI (non-zero = inside)")->required();
  c1->add_option("--output", ca.output, "JSON report");
  c1->callback([&] { action = [&] { cmd_c1(ca, out); }; });

  DiceArgs da;
  auto* dc = eval->add_subcommand("dice", "Dice overlap of two label maps");
  dc->add_option("--original", da.original, "label map NIfTI")->required();
  dc->add_option("--anonymized", da.anonymized, "label map NIfTI")->required();
  dc->add_option("--labels", da.labels, "comma-separated labels (default: all non-zero)");
  dc->add_option("--output", da.output, "JSON report");
  dc->callback([&] { action = [&] { cmd_dice(da, out); }; });

  TradeoffArgs to;
  auto* trade = eval->add_subcommand("tradeoff", "nCR versus inverse face distance per tool");
  trade->add_option("--original", to.original, "region volume CSV of original scans")->required();
  trade->add_option("--anonymized", to.anonymized, "tool=CSV (repeatable)")->required();
  trade->add_option("--embeddings", to.embeddings, "embedding CSV")->required();
  trade->add_option("--out-dir", to.out_dir, "report directory");
  trade->add_option("--q", to.q, "false discovery rate");
  add_report_flags(trade, to.cfg);
  add_config_flag(trade, to.cfg);
  trade->callback([&] { action = [&] { cmd_tradeoff(to, out); }; });

  InitArgs ia;
  auto* init_cmd = app.add_subcommand("init-weights", "write randomly initialised weights");
  init_cmd->add_option("--output", ia.output, "weights path (.rfkw)")->required();
  init_cmd->add_option("--tile", ia.cfg.tile, "tile shape recorded in the metadata");
  init_cmd->add_option("--cap", ia.cfg.cap, "winsorize cap recorded in the metadata");
  add_architecture_flags(init_cmd, ia.cfg);
  add_seed_flag(init_cmd, ia.cfg);
  add_config_flag(init_cmd, ia.cfg);
  init_cmd->callback([&] { action = [&] { cmd_init(ia, out); }; });

  PhantomArgs pa;
  auto* ph = app.add_subcommand("phantom", "write a synthetic head phantom and its masks");
  ph->add_option("--out-dir", pa.out_dir, "output directory")->required();
  ph->add_option("--dims", pa.dims, "volume dimensions");
  ph->add_option("--seed", pa.seed, "noise seed");
  ph->add_option("--voxel-mm", pa.voxel_mm, "voxel size in mm");
  ph->callback([&] { action = [&] { cmd_phantom(pa, out); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace reface
