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

#include <cmath>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "reface/cli.hpp"
#include "reface/nifti.hpp"
#include "reface/report.hpp"
#include "reface/run_config.hpp"
#include "reface/training.hpp"
#include "reface/volume_ops.hpp"
#include "support/png_decode.hpp"
#include "support/temp_dir.hpp"

using namespace reface;
using testing_support::read_bytes;
using testing_support::read_text;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string p(const TempDir& d, const std::string& name) { return (d / name).string(); }

const std::vector<std::string> kToyArch = {"--levels", "2", "--base-channels", "4", "--res-blocks", "2"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

std::string volume_csv(const std::vector<std::vector<double>>& rows) {
  std::string s = "subject_id,session_id,TIV,CSF,GM,WM,Thalamus,Caudate,Putamen,Pallidum,Hippocampus,Amygdala\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s += "s" + std::to_string(i) + ",m00";
    for (double v : rows[i]) s += "," + std::to_string(v);
    s += "\n";
  }
  return s;
}

std::vector<std::vector<double>> fixture_volumes(double scale, double jitter) {
  const std::vector<double> base = {1500, 300, 600, 500, 15, 7, 10, 3, 8, 3};
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 8; ++i) {
    std::vector<double> r;
    for (std::size_t k = 0; k < base.size(); ++k)
      r.push_back(base[k] * (scale + 0.02 * i) * (1.0 + jitter * std::sin(3.0 * i + static_cast<double>(k))));
    rows.push_back(r);
  }
  return rows;
}

// Two unit vectors at cosine distance d from e0 per subject.
std::string embedding_csv(const std::vector<std::pair<std::string, std::vector<double>>>& tools) {
  std::string s = "subject_id,session_id,variant,v0,v1\n";
  const std::size_t n = tools[0].second.size();
  for (std::size_t i = 0; i < n; ++i) {
    s += "s" + std::to_string(i) + ",m00,original,1,0\n";
    for (const auto& [tool, dist] : tools) {
      const double c = 1.0 - dist[i];
      char buf[128];
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", c, std::sqrt(1.0 - c * c));
      s += "s" + std::to_string(i) + ",m00," + tool + buf;
    }
  }
  return s;
}

class CliPhantom : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("reface_cli");
    ASSERT_EQ(run({"phantom", "--out-dir", p(*dir_, "ph"), "--dims", "32"}).code, 0);
    ASSERT_EQ(run(concat({"init-weights", "--output", p(*dir_, "w.rfkw"), "--tile", "16", "--cap", "1300"}, kToyArch))
                  .code,
              0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static TempDir* dir_;
};
TempDir* CliPhantom::dir_ = nullptr;

}  // namespace

TEST(CliBasics, HelpAndUnknownCommand) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"bogus"}).code, kExitUsage);
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"evaluate"}).code, kExitUsage);
}

TEST(CliBasics, ExitCodePartition) {
  EXPECT_EQ(exit_code_for(ErrorCode::ParseError), kExitUsage);
  EXPECT_EQ(exit_code_for(ErrorCode::PartialReport), kExitUsage);
  EXPECT_EQ(exit_code_for(ErrorCode::EmptySurface), kExitRuntime);
  EXPECT_EQ(exit_code_for(ErrorCode::NumericalError), kExitRuntime);
}

TEST_F(CliPhantom, RefaceHappyPathAndTimings) {
  const CliRun r = run({"reface", "--input", p(*dir_, "ph/defaced.nii.gz"), "--weights", p(*dir_, "w.rfkw"),
                     "--output", p(*dir_, "out1.nii.gz"), "--seed", "4", "--threads", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(*dir_ / "out1.nii.gz"));
  EXPECT_NE(r.err.find("stage,seconds\n"), std::string::npos);
  for (const char* stage : {"read", "load", "preprocess", "generate", "composite", "write", "total"})
    EXPECT_TRUE(std::regex_search(r.err, std::regex(std::string("\n") + stage + ",[0-9]+\\.[0-9]{3}\n"))) << stage;

  const NiftiImage in = read_nifti(*dir_ / "ph/defaced.nii.gz");
  const NiftiImage out = read_nifti(*dir_ / "out1.nii.gz");
  const BinaryMask mask = face_air_mask(in);
  std::size_t outside_changed = 0;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (!mask.data[i] && in.data.data[i] != out.data.data[i]) ++outside_changed;
  EXPECT_EQ(outside_changed, 0u);
}

TEST_F(CliPhantom, RefaceSameSeedIsByteIdentical) {
  for (const char* name : {"a.nii", "b.nii"})
    ASSERT_EQ(run({"reface", "--input", p(*dir_, "ph/defaced.nii.gz"), "--weights", p(*dir_, "w.rfkw"), "--output",
                   p(*dir_, name), "--seed", "9", "--threads", "1"})
                  .code,
              0);
  EXPECT_EQ(read_bytes(*dir_ / "a.nii"), read_bytes(*dir_ / "b.nii"));
}

TEST_F(CliPhantom, RefaceMissingWeightsNamesFlag) {
  const CliRun r = run({"reface", "--input", p(*dir_, "ph/defaced.nii.gz"), "--weights", p(*dir_, "missing.rfkw"),
                     "--output", p(*dir_, "x.nii")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--weights"), std::string::npos);
  EXPECT_FALSE(fs::exists(*dir_ / "x.nii"));
}

TEST_F(CliPhantom, RefaceWeightsFromConfig) {
  write_file(*dir_ / "run.ini", "[paths]\nweights = w.rfkw\n[reface]\nseed = 9\nthreads = 1\n");
  ASSERT_EQ(run({"reface", "--config", p(*dir_, "run.ini"), "--input", p(*dir_, "ph/defaced.nii.gz"), "--output",
                 p(*dir_, "cfg.nii")})
                .code,
            0);
  ASSERT_EQ(run({"reface", "--input", p(*dir_, "ph/defaced.nii.gz"), "--weights", p(*dir_, "w.rfkw"), "--output",
                 p(*dir_, "flags.nii"), "--seed", "9", "--threads", "1"})
                .code,
            0);
  EXPECT_EQ(read_bytes(*dir_ / "cfg.nii"), read_bytes(*dir_ / "flags.nii"));
}

TEST_F(CliPhantom, RenderCandidatesAndThreshold) {
  const CliRun c = run({"render-face", "--input", p(*dir_, "ph/original.nii.gz"), "--candidates", "--output",
                     p(*dir_, "render/face.png")});
  ASSERT_EQ(c.code, 0) << c.err;
  for (const char* t : {"80", "90", "100", "110", "120"})
    EXPECT_TRUE(fs::exists(*dir_ / ("render/face_t" + std::string(t) + ".png"))) << t;

  const CliRun one = run({"render-face", "--input", p(*dir_, "ph/original.nii.gz"), "--threshold", "100", "--output",
                       p(*dir_, "render/one.png"), "--obj"});
  ASSERT_EQ(one.code, 0) << one.err;
  EXPECT_TRUE(fs::exists(*dir_ / "render/one.obj"));
  int w = 0, h = 0;
  const auto px = testing_support::decode_png_gray(read_bytes(*dir_ / "render/one.png"), w, h);
  EXPECT_EQ(w, 512);
  std::size_t lit = 0;
  for (auto v : px) lit += v != 0;
  EXPECT_GT(static_cast<double>(lit) / static_cast<double>(px.size()), 0.05);
}

TEST_F(CliPhantom, RenderThresholdAboveMaxIsRuntimeError) {
  const CliRun r = run({"render-face", "--input", p(*dir_, "ph/original.nii.gz"), "--threshold", "300", "--output",
                     p(*dir_, "render/none.png")});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("EmptySurface"), std::string::npos);
  EXPECT_EQ(run({"render-face", "--input", p(*dir_, "ph/original.nii.gz"), "--output", p(*dir_, "r.png")}).code,
            kExitUsage);
}

TEST_F(CliPhantom, C1OnPhantomMasks) {
  const CliRun brain = run({"evaluate", "c1", "--before", p(*dir_, "ph/original.nii.gz"), "--after",
                         p(*dir_, "ph/defaced.nii.gz"), "--mask", p(*dir_, "ph/brain_mask.nii.gz"), "--output",
                         p(*dir_, "c1.json")});
  ASSERT_EQ(brain.code, 0) << brain.err;
  const auto j = nlohmann::json::parse(read_text(*dir_ / "c1.json"));
  EXPECT_TRUE(j["passed"].get<bool>());
  EXPECT_EQ(j["changed_voxels"].get<int>(), 0);
  const CliRun face = run({"evaluate", "c1", "--before", p(*dir_, "ph/original.nii.gz"), "--after",
                        p(*dir_, "ph/defaced.nii.gz"), "--mask", p(*dir_, "ph/face_mask.nii.gz")});
  EXPECT_NE(face.out.find(",false"), std::string::npos);
}

TEST(CliTrain, ToyScheduleAndDeterminism) {
  TempDir d("reface_train");
  for (const char* s : {"1", "2"})
    ASSERT_EQ(run({"phantom", "--out-dir", p(d, std::string("ph") + s), "--dims", "16", "--seed", s}).code, 0);
  write_file(d / "pairs.csv", "defaced,original\nph1/defaced.nii.gz,ph1/original.nii.gz\n"
                              "ph2/defaced.nii.gz,ph2/original.nii.gz\n");
  auto train_into = [&](const std::string& out) {
    return run(concat({"train", "--pairs-manifest", p(d, "pairs.csv"), "--out-dir", p(d, out), "--epochs", "3",
                       "--validate-every", "1", "--tile", "16", "--seed", "7", "--disc-base", "4", "--disc-layers",
                       "2"},
                      kToyArch));
  };
  const CliRun r = train_into("run1");
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* n : {"gen_epoch1", "gen_epoch2", "gen_epoch3", "gen_final"})
    EXPECT_TRUE(fs::exists(d / "run1" / (std::string(n) + ".rfkw"))) << n;
  EXPECT_FALSE(fs::exists(d / "run1" / "gen_epoch4.rfkw"));

  const std::string log = read_text(d / "run1" / "loss_log.csv");
  std::istringstream in(log);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,loss_D,loss_G,l15,lr");
  TrainSchedule sched;
  int rows = 0;
  while (std::getline(in, line)) {
    const auto last = line.rfind(',');
    const double lr = std::stod(line.substr(last + 1));
    EXPECT_NEAR(lr, cosine_lr(rows, sched), 1e-12);
    if (rows == 0) EXPECT_EQ(line.substr(last + 1), "0.0002");
    ++rows;
  }
  EXPECT_EQ(rows, 6);

  ASSERT_EQ(train_into("run2").code, 0);
  EXPECT_EQ(log, read_text(d / "run2" / "loss_log.csv"));
  EXPECT_EQ(read_bytes(d / "run1" / "gen_final.rfkw"), read_bytes(d / "run2" / "gen_final.rfkw"));
  EXPECT_EQ(read_bytes(d / "run1" / "train_config.json"), read_bytes(d / "run2" / "train_config.json"));
}

TEST(CliTrain, BadManifest) {
  TempDir d("reface_train_bad");
  write_file(d / "empty.csv", "defaced,original\n");
  write_file(d / "missing.csv", "nope.nii,alsonope.nii\n");
  write_file(d / "shape.csv", "only_one_column\n");
  for (const char* m : {"empty.csv", "missing.csv", "shape.csv", "absent.csv"})
    EXPECT_EQ(run({"train", "--pairs-manifest", p(d, m), "--out-dir", p(d, "o")}).code, kExitUsage) << m;
}

TEST(CliEvaluate, VolumesIdentityTables) {
  TempDir d("reface_vol");
  write_file(d / "orig.csv", volume_csv(fixture_volumes(1.0, 0.0)));
  const CliRun r = run({"evaluate", "volumes", "--original", p(d, "orig.csv"), "--anonymized",
                     "same=" + p(d, "orig.csv"), "--out-dir", p(d, "rep")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(read_text(d / "rep" / "volumes_report.json"));
  const auto& regions = j["tools"][0]["regions"];
  ASSERT_EQ(regions.size(), 10u);
  for (const auto& reg : regions) {
    EXPECT_EQ(reg["cr"].get<double>(), 0.0);
    EXPECT_TRUE(reg["wilcoxon"]["degenerate_pairs"].get<bool>());
  }
  EXPECT_TRUE(fs::exists(d / "rep" / "bland_altman_same_TIV.svg"));
  EXPECT_EQ(j["config"]["fdr_q"].get<double>(), 0.05);
}

TEST(CliEvaluate, ReidFixtureMatchesOracle) {
  TempDir d("reface_reid");
  write_file(d / "emb.csv", embedding_csv({{"cgan", {0.2, 0.6}}}));
  const CliRun r = run({"evaluate", "reid", "--embeddings", p(d, "emb.csv"), "--output", p(d, "reid.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(read_text(d / "reid.json"));
  const auto& s = j["tools"][0];
  EXPECT_EQ(s["tool"], "cgan");
  EXPECT_NEAR(s["pct_identifiable"].get<double>(), 50.0, 1e-9);
  EXPECT_NEAR(s["mean_distance"].get<double>(), 0.4, 1e-9);
  EXPECT_NEAR(s["mean_inverse_distance"].get<double>(), (5.0 + 1.0 / 0.6) / 2.0, 1e-9);
  EXPECT_EQ(j["config"]["threshold"].get<double>(), 0.4);

  ASSERT_EQ(run({"evaluate", "reid", "--embeddings", p(d, "emb.csv"), "--output", p(d, "reid100.json"), "--scale",
                 "x100"})
                .code,
            0);
  const auto k = nlohmann::json::parse(read_text(d / "reid100.json"));
  EXPECT_NEAR(k["tools"][0]["mean_distance"].get<double>(), 40.0, 1e-7);
  EXPECT_EQ(run({"evaluate", "reid", "--embeddings", p(d, "emb.csv"), "--output", p(d, "x.json"), "--scale", "pct"})
                .code,
            kExitUsage);
}

TEST(CliEvaluate, TradeoffOverTwoTools) {
  TempDir d("reface_trade");
  write_file(d / "orig.csv", volume_csv(fixture_volumes(1.0, 0.0)));
  write_file(d / "a.csv", volume_csv(fixture_volumes(1.0, 0.01)));
  write_file(d / "b.csv", volume_csv(fixture_volumes(1.0, 0.04)));
  write_file(d / "emb.csv", embedding_csv({{"A", {0.5, 0.7, 0.6}}, {"B", {0.2, 0.3, 0.25}}}));
  auto go = [&](const std::string& out) {
    return run({"evaluate", "tradeoff", "--original", p(d, "orig.csv"), "--anonymized", "A=" + p(d, "a.csv"),
                "--anonymized", "B=" + p(d, "b.csv"), "--embeddings", p(d, "emb.csv"), "--out-dir", p(d, out)});
  };
  const CliRun r = go("rep1");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string svg = read_text(d / "rep1" / "tradeoff.svg");
  std::size_t markers = 0;
  for (std::size_t at = 0; (at = svg.find("class=\"tool\"", at)) != std::string::npos; ++at) ++markers;
  EXPECT_EQ(markers, 2u);
  const std::string csv = read_text(d / "rep1" / "tradeoff.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);

  ASSERT_EQ(go("rep2").code, 0);
  for (const char* f : {"tradeoff.svg", "tradeoff.csv", "evaluation_report.json", "bland_altman_A_TIV.svg"})
    EXPECT_EQ(read_bytes(d / "rep1" / f), read_bytes(d / "rep2" / f)) << f;
}

TEST(CliEvaluate, TradeoffMissingBlockIsPartialReport) {
  TempDir d("reface_partial");
  write_file(d / "orig.csv", volume_csv(fixture_volumes(1.0, 0.0)));
  write_file(d / "a.csv", volume_csv(fixture_volumes(1.0, 0.01)));
  write_file(d / "emb.csv", embedding_csv({{"A", {0.5, 0.7}}, {"B", {0.2, 0.3}}}));
  const CliRun r = run({"evaluate", "tradeoff", "--original", p(d, "orig.csv"), "--anonymized", "A=" + p(d, "a.csv"),
                     "--embeddings", p(d, "emb.csv"), "--out-dir", p(d, "rep")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("PartialReport"), std::string::npos);
  EXPECT_NE(r.err.find("B.volumes"), std::string::npos);
  const auto j = nlohmann::json::parse(read_text(d / "rep" / "evaluation_report.json"));
  EXPECT_FALSE(j["tools"][1]["complete"].get<bool>());
}

TEST(RunConfigFile, ParseAndReject) {
  const RunConfig c = parse_run_config(
      "; comment\n[reface]\ndropout_p = 0.1\ntile_shape = 64x64x32\n[report]\nscale = x100\nthreshold = 0.35\n"
      "[generator]\nlevels = 3\n");
  EXPECT_EQ(c.dropout_p, 0.1);
  EXPECT_EQ(c.tile_shape, (Dims3{64, 64, 32}));
  EXPECT_EQ(c.scale, DistanceScale::X100);
  EXPECT_EQ(c.reid_threshold, 0.35);
  EXPECT_EQ(c.generator.levels, 3);
  EXPECT_EQ(parse_run_config("[reface]\nthreads = 2   ; worker count\nseed = 5 # fixed\n").threads, 2);
  EXPECT_THROW(parse_run_config("[reface]\nspeed = 3\n"), Error);
  EXPECT_THROW(parse_run_config("[gpu]\nid = 0\n"), Error);
  EXPECT_THROW(parse_run_config("[reface]\nseed = abc\n"), Error);
  RunConfig bad;
  bad.weights = "/nonexistent/w.rfkw";
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_EQ(parse_dims("128"), (Dims3{128, 128, 128}));
}

TEST(SvgPlots, BlandAltmanIdentityLinesCoincide) {
  const BlandAltman ba = bland_altman({5, 6, 7}, {5, 6, 7});
  const std::string svg = bland_altman_svg(ba, "identity");
  std::smatch m;
  std::vector<std::string> ys;
  for (const char* cls : {"mean", "loa-high", "loa-low"}) {
    const std::regex re(std::string("y1=\"([0-9.]+)\" x2=\"[0-9.]+\" y2=\"([0-9.]+)\" class=\"") + cls + "\"");
    ASSERT_TRUE(std::regex_search(svg, m, re)) << cls;
    EXPECT_EQ(m[1], m[2]);
    ys.push_back(m[1]);
  }
  EXPECT_EQ(ys[0], ys[1]);
  EXPECT_EQ(ys[0], ys[2]);
  EXPECT_EQ(svg, bland_altman_svg(ba, "identity"));
}

TEST(SvgPlots, TradeoffCoordinateMapping) {
  const std::vector<TradeoffPoint> pts = {{"A", 0.1, 0.02, 2.0, 0.3}, {"B", 0.3, 0.05, 4.0, 0.5}};
  const auto layout = tradeoff_layout(pts);
  EXPECT_LT(layout[0].x, layout[1].x);    // A left of B
  EXPECT_GT(layout[0].y, layout[1].y);    // and below it (SVG y grows downward)
  const std::string svg = tradeoff_svg(pts);
  EXPECT_EQ(svg, tradeoff_svg(pts));
  EXPECT_NE(svg.find("cx=\"" + [&] {
              char b[32];
              std::snprintf(b, sizeof b, "%.4f", layout[0].x);
              return std::string(b);
            }() + "\""),
            std::string::npos);
}

TEST(SvgPlots, WhiskersMatchSpreads) {
  const std::vector<TradeoffPoint> pts = {{"A", 0.2, 0.05, 3.0, 0.5}, {"B", 0.4, 0.1, 1.0, 0.25}};
  const PlotFrame f;
  const auto layout = tradeoff_layout(pts, f);
  // Pixel scale from the two markers, then whisker half-length in data units.
  const double sx = (layout[1].x - layout[0].x) / (0.4 - 0.2);
  const std::string svg = tradeoff_svg(pts);
  const std::regex re("<line x1=\"([0-9.]+)\" y1=\"[0-9.]+\" x2=\"([0-9.]+)\" y2=\"[0-9.]+\" class=\"whisker\"");
  auto it = std::sregex_iterator(svg.begin(), svg.end(), re);
  ASSERT_NE(it, std::sregex_iterator());
  const double half = (std::stod((*it)[2]) - std::stod((*it)[1])) / 2.0 / sx;
  EXPECT_NEAR(half, 0.05, 1e-3);
}

TEST(SvgPlots, PartialReportListsMissingBlocks) {
  EvaluationReport rep;
  ToolReport t;
  t.tool = "x";
  rep.tools.push_back(t);
  try {
    emit_svg_plots(rep);
    FAIL() << "expected PartialReport";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PartialReport);
    EXPECT_NE(std::string(e.what()).find("x.volumes"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("x.reid"), std::string::npos);
  }
}
