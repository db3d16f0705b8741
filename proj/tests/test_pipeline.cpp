// Copyright 2026 The Keymask Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>
#include <map>

#include <gtest/gtest.h>

#include "cases.hpp"
#include "keymask/errors.hpp"
#include "keymask/hungarian.hpp"
#include "keymask/pipeline.hpp"
#include "tempdir.hpp"

namespace keymask {
namespace {

namespace fs = std::filesystem;
using testing_util::TempDir;

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return files;
}

PipelineConfig small_config(int videos) {
  PipelineConfig c;
  c.seed = 7;
  c.num_videos = videos;
  c.train.steps = 10;
  c.train.batch_size = 2;
  return c;
}

TEST(Config, JsonRoundTrip) {
  PipelineConfig c;
  c.seed = 3;
  c.synth.motions = {MotionType::kScale};
  c.discovery.visibility_dbscan.eps = 4.0;
  c.train.mu = 0.5;
  const Json j = pipeline_config_to_json(c);
  EXPECT_EQ(pipeline_config_to_json(pipeline_config_from_json(j, "c")), j);
  EXPECT_TRUE(pipeline_config_to_json(PipelineConfig{})["discovery"]["matching_dbscan"]["eps"].is_null());
}

TEST(Config, DefaultsMatchLibraryDefaults) {
  const PipelineConfig c = load_pipeline_config(std::nullopt, {});
  EXPECT_DOUBLE_EQ(c.discovery.gamma_thr, 0.3);
  EXPECT_DOUBLE_EQ(c.discovery.lambda_j, 0.5);
  EXPECT_DOUBLE_EQ(c.train.weights.lambda_ce, 5.0);
  EXPECT_DOUBLE_EQ(c.train.weights.lambda_dice, 5.0);
  EXPECT_DOUBLE_EQ(c.train.mu, 0.999);
  EXPECT_EQ(c.train.snippet_len, 2);
  EXPECT_EQ(c.discovery.visibility_dbscan.min_pts, 2);
}

TEST(Config, FileThenOverrides) {
  TempDir dir;
  write_json(dir / "c.json", Json{{"seed", 11}, {"train", {{"steps", 50}}}});
  const PipelineConfig c =
      load_pipeline_config(dir / "c.json", {"train.steps=5", "discovery.lambda_j=0.6", "seed=12"});
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.train.steps, 5);
  EXPECT_EQ(c.train.seed, 12u);
  EXPECT_DOUBLE_EQ(c.discovery.lambda_j, 0.6);
  EXPECT_EQ(load_pipeline_config(dir / "c.json", {}).train.steps, 50);
}

TEST(Config, StringOverride) {
  const PipelineConfig c = load_pipeline_config(std::nullopt, {"synth.motions=[\"occlusion\"]"});
  EXPECT_EQ(c.synth.motions, (std::vector<MotionType>{MotionType::kPartialOcclusion}));
}

TEST(Config, Rejections) {
  TempDir dir;
  write_json(dir / "c.json", Json{{"train", {{"stepz", 50}}}});
  EXPECT_THROW(load_pipeline_config(dir / "c.json", {}), FormatError);
  EXPECT_THROW(load_pipeline_config(std::nullopt, {"nonsense"}), InputError);
  EXPECT_THROW(load_pipeline_config(std::nullopt, {"train.bogus=1"}), FormatError);
  EXPECT_THROW(load_pipeline_config(std::nullopt, {"discovery.gamma_thr=1.5"}), InputError);
  EXPECT_THROW(load_pipeline_config(std::nullopt, {"train.steps=\"many\""}), FormatError);
  EXPECT_THROW(load_pipeline_config(dir / "missing.json", {}), IoError);
}

TEST(Synth, SameSeedSameBytes) {
  TempDir a, b;
  cmd_synth(small_config(3), a.path());
  cmd_synth(small_config(3), b.path());
  const auto sa = snapshot(a.path());
  EXPECT_EQ(sa, snapshot(b.path()));
  EXPECT_EQ(sa.count("manifest.json"), 1u);
  EXPECT_EQ(sa.count("gt.json"), 1u);
  PipelineConfig other = small_config(3);
  other.seed = 8;
  TempDir c;
  cmd_synth(other, c.path());
  EXPECT_NE(snapshot(c.path()), sa);
}

TEST(Synth, FilesParseThroughReaders) {
  TempDir dir;
  cmd_synth(small_config(2), dir.path());
  const DatasetPaths data{dir.path()};
  const auto ids = dataset_video_ids(data);
  ASSERT_EQ(ids.size(), 2u);
  const Labelset gt = read_labelset(data.ground_truth());
  EXPECT_EQ(gt.kind, LabelsetKind::kGroundTruth);
  const Json assignment = read_json(data.gt_assignment());
  for (const auto& id : ids) {
    const TrackFile tf = read_track_file(data.tracks(id));
    const FeatureVideo fv = read_features(data.features(id));
    EXPECT_EQ(fv.frames(), tf.num_frames);
    EXPECT_EQ(assignment.at("videos").at(id).size(), tf.tracks.size());
    ASSERT_NE(gt.find(id), nullptr);
  }
}

TEST(Synth, NoNoiseMeansNoNoiseEntries) {
  TempDir dir;
  PipelineConfig c = small_config(3);
  c.synth.noise_rate = 0.0;
  cmd_synth(c, dir.path());
  EXPECT_EQ(read_file(DatasetPaths{dir.path()}.gt_assignment()).find("NOISE"), std::string::npos);
  TempDir noisy;
  cmd_synth(small_config(3), noisy.path());
  EXPECT_NE(read_file(DatasetPaths{noisy.path()}.gt_assignment()).find("NOISE"), std::string::npos);
}

// Occlusion and scale change lower point-mask agreement enough to split an
// instance, so the exact count check uses translating objects only.
TEST(Discover, TranslatingVideosRecoverInstanceCount) {
  TempDir dir;
  PipelineConfig c = small_config(4);
  c.synth.noise_rate = 0.0;
  c.synth.jitter = 0;
  c.synth.motions = {MotionType::kTranslate};
  c.synth.max_instances = 2;
  cmd_synth(c, dir.path());
  const DiscoverOutput out = cmd_discover(c, dir.path(), dir / "sparse.json", dir / "report.json");
  const Labelset gt = read_labelset(DatasetPaths{dir.path()}.ground_truth());
  for (const auto& v : gt.videos) {
    ASSERT_NE(out.labels.find(v.id), nullptr);
    EXPECT_EQ(out.labels.find(v.id)->instances.size(), v.instances.size()) << v.id;
  }
  EXPECT_EQ(read_labelset(dir / "sparse.json"), out.labels);
  EXPECT_EQ(read_json(dir / "report.json"), out.report);
}

TEST(Discover, ReportSchema) {
  TempDir dir;
  const PipelineConfig c = small_config(2);
  cmd_synth(c, dir.path());
  const Json r = cmd_discover(c, dir.path(), {}, {}).report;
  EXPECT_EQ(r.at("schema_version"), kSchemaVersion);
  ASSERT_TRUE(r.at("videos").is_array());
  ASSERT_TRUE(r.at("discarded").is_array());
  int masks = 0;
  for (const Json& v : r.at("videos")) {
    for (const char* key : {"num_masks", "num_groups", "num_outliers", "num_subgroups",
                            "num_dropped_members", "num_instances"}) {
      EXPECT_TRUE(v.at(key).is_number_integer()) << key;
    }
    EXPECT_TRUE(v.at("status") == "OK" || v.at("status") == "DISCARDED");
    EXPECT_TRUE(v.at("id").is_string());
    EXPECT_EQ(v.at("mask_assignment").size(), v.at("num_masks").get<size_t>());
    masks += v.at("num_masks").get<int>();
  }
  EXPECT_EQ(r.at("totals").at("num_videos"), 2);
  EXPECT_EQ(r.at("totals").at("num_masks"), masks);
}

TEST(Discover, NoiseOnlyVideoListedDiscarded) {
  TempDir dir;
  TrackFile tf{"noise_only", 10, 96, 96, {}};
  for (int t = 0; t < 10; ++t) {
    const RleMask m = oracle::box_mask(96, 96, 8 * t, 5, 8 * t + 6, 12);
    InstanceTrack track;
    track.source_video = tf.id;
    track.source_frame = t;
    track.source_mask = m;
    for (const Point2& p : init_point_grid(m)) {
      Trajectory traj{std::vector<Point2>(10, p), std::vector<bool>(10, false)};
      traj.visible[static_cast<size_t>(t)] = true;
      track.trajectories.push_back(traj);
    }
    tf.tracks.push_back(track);
  }
  write_track_file(DatasetPaths{dir.path()}.tracks(tf.id), tf);
  const DiscoverOutput out = cmd_discover(PipelineConfig{}, dir.path(), {}, {});
  EXPECT_EQ(out.report.at("discarded"), Json::array({"noise_only"}));
  EXPECT_EQ(out.report.at("videos")[0].at("status"), "DISCARDED");
  EXPECT_TRUE(out.labels.find("noise_only")->discarded);
}

TEST(Discover, MalformedTrackFileNamesLocation) {
  TempDir dir;
  write_file_atomic(DatasetPaths{dir.path()}.tracks("bad"), "{\"id\": \"bad\", \"T\": }");
  try {
    cmd_discover(PipelineConfig{}, dir.path(), {}, {});
    FAIL() << "expected a FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.json"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("column"), std::string::npos);
  }
}

TEST(Train, StageTwoNeedsDenseLabels) {
  TempDir dir;
  const PipelineConfig c = small_config(2);
  cmd_synth(c, dir.path());
  cmd_discover(c, dir.path(), dir / "sparse.json", {});
  EXPECT_THROW(cmd_train(c, 2, dir / "sparse.json", dir.path(), dir / "out"), InputError);
  EXPECT_THROW(cmd_train(c, 3, dir / "sparse.json", dir.path(), dir / "out"), InputError);
}

TEST(Train, WritesArtifactsDeterministically) {
  TempDir dir;
  const PipelineConfig c = small_config(2);
  cmd_synth(c, dir.path());
  cmd_discover(c, dir.path(), dir / "sparse.json", {});
  const TrainOutput a = cmd_train(c, 1, dir / "sparse.json", dir.path(), dir / "a");
  cmd_train(c, 1, dir / "sparse.json", dir.path(), dir / "b");
  EXPECT_EQ(snapshot(dir / "a"), snapshot(dir / "b"));
  EXPECT_EQ(read_model(dir / "a" / "model.kmm"), a.result.teacher);
  EXPECT_EQ(read_labelset(dir / "a" / "dense.json"), a.dense);
  EXPECT_TRUE(is_dense(a.dense));
  // One JSON object per step.
  const std::string log = read_file(dir / "a" / "train_log.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), c.train.steps);
  const Json first = Json::parse(log.substr(0, log.find('\n')));
  for (const char* key : {"step", "droploss", "distill_loss", "total"}) EXPECT_TRUE(first.contains(key));
}

TEST(Pipeline, ThreadCountDoesNotChangeOutput) {
  std::map<std::string, std::string> runs[2];
  for (int k = 0; k < 2; ++k) {
    TempDir dir;
    PipelineConfig c = small_config(5);
    c.threads = k == 0 ? 1 : 4;
    cmd_synth(c, dir.path());
    cmd_discover(c, dir.path(), dir / "sparse.json", dir / "report.json");
    cmd_train(c, 1, dir / "sparse.json", dir.path(), dir / "out");
    cmd_eval(c, dir / "out" / "model.kmm", dir / "gt.json", dir.path(), EvalOptions{},
             dir / "metrics.json");
    runs[k] = snapshot(dir.path());
    // The manifest records the config, thread count included.
    runs[k].erase("manifest.json");
  }
  ASSERT_EQ(runs[0].size(), runs[1].size());
  for (const auto& [name, bytes] : runs[0]) EXPECT_TRUE(runs[1].at(name) == bytes) << name;
}

TEST(Train, UnknownVideoInLabelsIsInputError) {
  TempDir dir;
  const PipelineConfig c = small_config(1);
  cmd_synth(c, dir.path());
  Labelset ls = read_labelset(DatasetPaths{dir.path()}.ground_truth());
  ls.videos[0].id = "elsewhere";
  write_labelset(dir / "labels.json", ls);
  EXPECT_THROW(cmd_train(c, 1, dir / "labels.json", dir.path(), dir / "out"), InputError);
}

TEST(Train, StageOneDenseLabelsCoverVisibleFrames) {
  TempDir dir;
  PipelineConfig c = small_config(3);
  c.train.steps = 600;
  c.train.batch_size = 4;
  cmd_synth(c, dir.path());
  const Labelset gt = read_labelset(DatasetPaths{dir.path()}.ground_truth());
  write_labelset(dir / "sparse.json", cases::drop_frames(gt, 0.5, 3));
  const TrainOutput out = cmd_train(c, 1, dir / "sparse.json", dir.path(), dir / "out");
  int visible = 0, covered = 0;
  for (const auto& gv : gt.videos) {
    const VideoLabels* dv = out.dense.find(gv.id);
    ASSERT_NE(dv, nullptr);
    std::vector<std::vector<double>> cost;
    for (const auto& g : gv.instances) {
      cost.emplace_back();
      for (const auto& d : dv->instances) {
        cost.back().push_back(1.0 - st_iou(to_track(d, dv->num_frames), to_track(g, gv.num_frames)));
      }
    }
    const auto pairing = hungarian_match(cost);
    for (size_t i = 0; i < gv.instances.size(); ++i) {
      for (const auto& [t, m] : gv.instances[i].masks) {
        ++visible;
        if (pairing[i] == kUnassigned) continue;
        const auto& masks = dv->instances[static_cast<size_t>(pairing[i])].masks;
        auto it = masks.find(t);
        covered += it != masks.end() && !it->second.is_empty();
      }
    }
  }
  EXPECT_GE(static_cast<double>(covered) / visible, 0.95) << covered << "/" << visible;
}

TEST(Eval, GroundTruthAgainstItself) {
  TempDir dir;
  const PipelineConfig c = small_config(3);
  cmd_synth(c, dir.path());
  const fs::path gt = DatasetPaths{dir.path()}.ground_truth();
  const Json m = cmd_eval(c, gt, gt, {}, EvalOptions{}, dir / "metrics.json");
  EXPECT_DOUBLE_EQ(m.at("AP").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(m.at("AP50").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(m.at("JF").get<double>(), 1.0);
  EXPECT_EQ(m.at("schema_version"), kSchemaVersion);
  EXPECT_EQ(m.at("AP_per_threshold").size(), 10u);
  EXPECT_EQ(read_json(dir / "metrics.json"), m);
}

TEST(Eval, EmptyPredictionsScoreZero) {
  TempDir dir;
  const PipelineConfig c = small_config(2);
  cmd_synth(c, dir.path());
  const fs::path gt = DatasetPaths{dir.path()}.ground_truth();
  Labelset empty = read_labelset(gt);
  for (auto& v : empty.videos) v.instances.clear();
  write_labelset(dir / "empty.json", empty);
  const Json m = cmd_eval(c, dir / "empty.json", gt, {}, EvalOptions{}, {});
  EXPECT_DOUBLE_EQ(m.at("AP").get<double>(), 0.0);
  EXPECT_DOUBLE_EQ(m.at("JF").get<double>(), 0.0);
}

TEST(Eval, MissingVideosAreListed) {
  TempDir dir;
  const PipelineConfig c = small_config(3);
  cmd_synth(c, dir.path());
  const fs::path gt = DatasetPaths{dir.path()}.ground_truth();
  Labelset partial = read_labelset(gt);
  const std::string dropped = partial.videos[1].id;
  partial.videos.erase(partial.videos.begin() + 1);
  write_labelset(dir / "partial.json", partial);
  try {
    cmd_eval(c, dir / "partial.json", gt, {}, EvalOptions{}, {});
    FAIL() << "expected an InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find(dropped), std::string::npos);
  }
}

TEST(Eval, AgreesWithLibraryCalls) {
  TempDir dir;
  const PipelineConfig c = small_config(3);
  cmd_synth(c, dir.path());
  const DiscoverOutput d = cmd_discover(c, dir.path(), dir / "sparse.json", {});
  const fs::path gt_path = DatasetPaths{dir.path()}.ground_truth();
  const Labelset gt = read_labelset(gt_path);
  const Json m = cmd_eval(c, dir / "sparse.json", gt_path, {}, EvalOptions{}, {});
  const ApResult ap = video_ap(d.labels, gt);
  const JfResult jf = dataset_j_and_f(d.labels, gt);
  EXPECT_DOUBLE_EQ(m.at("AP").get<double>(), ap.ap);
  EXPECT_DOUBLE_EQ(m.at("J").get<double>(), jf.j);
  EXPECT_DOUBLE_EQ(m.at("F").get<double>(), jf.f);
  const Json only_ap = cmd_eval(c, dir / "sparse.json", gt_path, {}, EvalOptions{true, false}, {});
  EXPECT_TRUE(only_ap.contains("AP"));
  EXPECT_FALSE(only_ap.contains("JF"));
}

TEST(Eval, ModelPredictions) {
  TempDir dir;
  const PipelineConfig c = small_config(2);
  cmd_synth(c, dir.path());
  cmd_discover(c, dir.path(), dir / "sparse.json", {});
  const TrainOutput t = cmd_train(c, 1, dir / "sparse.json", dir.path(), dir / "out");
  const fs::path gt = DatasetPaths{dir.path()}.ground_truth();
  const Json from_model = cmd_eval(c, dir / "out" / "model.kmm", gt, dir.path(), EvalOptions{}, {});
  const Json from_dense = cmd_eval(c, dir / "out" / "dense.json", gt, {}, EvalOptions{}, {});
  EXPECT_EQ(from_model, from_dense);
  EXPECT_THROW(cmd_eval(c, dir / "out" / "model.kmm", gt, {}, EvalOptions{}, {}), InputError);
}

}  // namespace
}  // namespace keymask
