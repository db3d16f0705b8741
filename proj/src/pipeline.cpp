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

#include "keymask/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

#include "keymask/errors.hpp"
#include "keymask/parallel.hpp"

namespace keymask {

namespace fs = std::filesystem;

void PipelineConfig::validate() const {
  if (num_videos < 1) throw InputError("config: num_videos must be >= 1");
  validate_config(synth);
  if (!(discovery.gamma_thr > 0.0 && discovery.gamma_thr < 1.0)) {
    throw InputError("config: gamma_thr must lie in (0, 1)");
  }
  if (!(discovery.lambda_j > 0.0 && discovery.lambda_j < 1.0)) {
    throw InputError("config: lambda_j must lie in (0, 1)");
  }
  for (const DbscanParams* p : {&discovery.visibility_dbscan, &discovery.matching_dbscan}) {
    if (p->min_pts < 1) throw InputError("config: dbscan min_pts must be >= 1");
    if (p->eps && !(*p->eps >= 0.0)) throw InputError("config: dbscan eps must be >= 0");
  }
  train.validate();
  for (double thr : ap_thresholds) {
    if (!(thr > 0.0 && thr < 1.0)) throw InputError("config: AP thresholds must lie in (0, 1)");
  }
  if (ap_thresholds.empty()) throw InputError("config: no AP thresholds");
  if (threads < 0) throw InputError("config: threads must be >= 0");
}

namespace {

const char* motion_name(MotionType m) {
  switch (m) {
    case MotionType::kTranslate:
      return "translate";
    case MotionType::kScale:
      return "scale";
    case MotionType::kPartialOcclusion:
      return "occlusion";
  }
  return "translate";
}

MotionType motion_from_name(const std::string& s) {
  if (s == "translate") return MotionType::kTranslate;
  if (s == "scale") return MotionType::kScale;
  if (s == "occlusion") return MotionType::kPartialOcclusion;
  throw FormatError("config: unknown motion '" + s + "'");
}

Json dbscan_json(const DbscanParams& p) {
  return Json{{"eps", p.eps ? Json(*p.eps) : Json(nullptr)}, {"min_pts", p.min_pts}};
}

// Rejects keys of `user` that the defaults document does not have.
void check_known(const Json& user, const Json& base, const std::string& where) {
  if (!user.is_object() || !base.is_object()) return;
  for (const auto& [key, value] : user.items()) {
    auto it = base.find(key);
    if (it == base.end()) throw FormatError(where + ": unknown field '" + key + "'");
    check_known(value, *it, where + "." + key);
  }
}

template <typename T>
T get_field(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(where + ": missing field '" + key + "'");
  try {
    return it->template get<T>();
  } catch (const Json::exception&) {
    throw FormatError(where + "." + key + ": wrong type");
  }
}

DbscanParams dbscan_from(const Json& j, const std::string& where) {
  DbscanParams p;
  auto it = j.find("eps");
  if (it != j.end() && !it->is_null()) p.eps = get_field<double>(j, "eps", where);
  p.min_pts = get_field<int>(j, "min_pts", where);
  return p;
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::string threshold_key(double thr) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", thr);
  return buf;
}

}  // namespace

Json pipeline_config_to_json(const PipelineConfig& c) {
  Json motions = Json::array();
  for (MotionType m : c.synth.motions) motions.push_back(motion_name(m));
  const SynthConfig& s = c.synth;
  const TrainConfig& t = c.train;
  return Json{
      {"schema_version", kSchemaVersion},
      {"seed", c.seed},
      {"threads", c.threads},
      {"synth",
       {{"num_videos", c.num_videos},
        {"num_frames", s.num_frames},
        {"height", s.height},
        {"width", s.width},
        {"min_instances", s.min_instances},
        {"max_instances", s.max_instances},
        {"motions", motions},
        {"staggered", s.staggered},
        {"noise_rate", s.noise_rate},
        {"noise_life", s.noise_life},
        {"duplicate_rate", s.duplicate_rate},
        {"miss_rate", s.miss_rate},
        {"drift_rate", s.drift_rate},
        {"min_radius", s.min_radius},
        {"max_radius", s.max_radius},
        {"jitter", s.jitter},
        {"grid_spacing", s.grid_spacing},
        {"min_mask_area", s.min_mask_area},
        {"occluder_width", s.occluder_width},
        {"feature_noise", s.feature_noise}}},
      {"discovery",
       {{"gamma_thr", c.discovery.gamma_thr},
        {"lambda_j", c.discovery.lambda_j},
        {"visibility_dbscan", dbscan_json(c.discovery.visibility_dbscan)},
        {"matching_dbscan", dbscan_json(c.discovery.matching_dbscan)}}},
      {"train",
       {{"learning_rate", t.learning_rate},
        {"steps", t.steps},
        {"batch_size", t.batch_size},
        {"mu", t.mu},
        {"lambda_ce", t.weights.lambda_ce},
        {"lambda_dice", t.weights.lambda_dice},
        {"snippet_len", t.snippet_len},
        {"distill_warmup_steps", t.distill_warmup_steps},
        {"use_distillation", t.use_distillation},
        {"num_slots", t.num_slots},
        {"threshold", t.threshold},
        {"area_floor", t.area_floor},
        {"init_weight_scale", t.init_weight_scale},
        {"init_bias", t.init_bias}}},
      {"eval", {{"boundary_tol", c.boundary_tol < 0.0 ? Json(nullptr) : Json(c.boundary_tol)},
                {"ap_thresholds", c.ap_thresholds}}},
  };
}

PipelineConfig pipeline_config_from_json(const Json& user, const std::string& origin) {
  check_schema_version(user, origin);
  const PipelineConfig defaults;
  Json doc = pipeline_config_to_json(defaults);
  check_known(user, doc, origin);
  doc.merge_patch(user);

  PipelineConfig c;
  c.seed = get_field<uint64_t>(doc, "seed", origin);
  c.threads = get_field<int>(doc, "threads", origin);

  const std::string sw = origin + ".synth";
  const Json& s = doc.at("synth");
  c.num_videos = get_field<int>(s, "num_videos", sw);
  c.synth.num_frames = get_field<int>(s, "num_frames", sw);
  c.synth.height = get_field<int>(s, "height", sw);
  c.synth.width = get_field<int>(s, "width", sw);
  c.synth.min_instances = get_field<int>(s, "min_instances", sw);
  c.synth.max_instances = get_field<int>(s, "max_instances", sw);
  c.synth.motions.clear();
  for (const auto& name : get_field<std::vector<std::string>>(s, "motions", sw)) {
    c.synth.motions.push_back(motion_from_name(name));
  }
  c.synth.staggered = get_field<bool>(s, "staggered", sw);
  c.synth.noise_rate = get_field<double>(s, "noise_rate", sw);
  c.synth.noise_life = get_field<int>(s, "noise_life", sw);
  c.synth.duplicate_rate = get_field<double>(s, "duplicate_rate", sw);
  c.synth.miss_rate = get_field<double>(s, "miss_rate", sw);
  c.synth.drift_rate = get_field<double>(s, "drift_rate", sw);
  c.synth.min_radius = get_field<double>(s, "min_radius", sw);
  c.synth.max_radius = get_field<double>(s, "max_radius", sw);
  c.synth.jitter = get_field<int>(s, "jitter", sw);
  c.synth.grid_spacing = get_field<int>(s, "grid_spacing", sw);
  c.synth.min_mask_area = get_field<int>(s, "min_mask_area", sw);
  c.synth.occluder_width = get_field<int>(s, "occluder_width", sw);
  c.synth.feature_noise = get_field<double>(s, "feature_noise", sw);

  const std::string dw = origin + ".discovery";
  const Json& d = doc.at("discovery");
  c.discovery.gamma_thr = get_field<double>(d, "gamma_thr", dw);
  c.discovery.lambda_j = get_field<double>(d, "lambda_j", dw);
  c.discovery.visibility_dbscan = dbscan_from(d.at("visibility_dbscan"), dw + ".visibility_dbscan");
  c.discovery.matching_dbscan = dbscan_from(d.at("matching_dbscan"), dw + ".matching_dbscan");

  const std::string tw = origin + ".train";
  const Json& t = doc.at("train");
  c.train.learning_rate = get_field<double>(t, "learning_rate", tw);
  c.train.steps = get_field<int>(t, "steps", tw);
  c.train.batch_size = get_field<int>(t, "batch_size", tw);
  c.train.mu = get_field<double>(t, "mu", tw);
  c.train.weights.lambda_ce = get_field<double>(t, "lambda_ce", tw);
  c.train.weights.lambda_dice = get_field<double>(t, "lambda_dice", tw);
  c.train.snippet_len = get_field<int>(t, "snippet_len", tw);
  c.train.distill_warmup_steps = get_field<int>(t, "distill_warmup_steps", tw);
  c.train.use_distillation = get_field<bool>(t, "use_distillation", tw);
  c.train.num_slots = get_field<int>(t, "num_slots", tw);
  c.train.threshold = get_field<double>(t, "threshold", tw);
  c.train.area_floor = get_field<int>(t, "area_floor", tw);
  c.train.init_weight_scale = get_field<double>(t, "init_weight_scale", tw);
  c.train.init_bias = get_field<double>(t, "init_bias", tw);
  c.train.seed = c.seed;

  const std::string ew = origin + ".eval";
  const Json& e = doc.at("eval");
  auto tol = e.find("boundary_tol");
  c.boundary_tol = (tol == e.end() || tol->is_null()) ? -1.0 : get_field<double>(e, "boundary_tol", ew);
  c.ap_thresholds = get_field<std::vector<double>>(e, "ap_thresholds", ew);
  return c;
}

void apply_override(Json& doc, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw InputError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  std::string pointer;
  std::stringstream parts(key);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (part.empty()) throw InputError("override key '" + key + "' has an empty component");
    pointer += "/" + part;
  }
  if (!doc.is_object()) doc = Json::object();
  doc[Json::json_pointer(pointer)] = std::move(value);
}

PipelineConfig load_pipeline_config(const std::optional<fs::path>& path,
                                    const std::vector<std::string>& overrides) {
  Json doc = path ? read_json(*path) : Json::object();
  for (const auto& o : overrides) apply_override(doc, o);
  PipelineConfig c = pipeline_config_from_json(doc, path ? path->string() : "config");
  c.validate();
  return c;
}

std::vector<std::string> dataset_video_ids(const DatasetPaths& data) {
  if (fs::exists(data.manifest())) {
    const Json m = read_json(data.manifest());
    check_schema_version(m, data.manifest().string());
    try {
      return m.at("videos").get<std::vector<std::string>>();
    } catch (const Json::exception&) {
      throw FormatError(data.manifest().string() + ": 'videos' must be a list of ids");
    }
  }
  std::vector<std::string> ids;
  const fs::path dir = data.root / "tracks";
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.path().extension() == ".json") ids.push_back(entry.path().stem().string());
  }
  if (ec) throw IoError("cannot list '" + dir.string() + "'");
  std::sort(ids.begin(), ids.end());
  return ids;
}

Labelset ground_truth_labels(const SyntheticVideo& video) {
  Labelset out;
  out.kind = LabelsetKind::kGroundTruth;
  VideoLabels v;
  v.id = video.id;
  v.num_frames = video.num_frames;
  for (int i = 0; i < video.num_instances(); ++i) {
    InstanceLabels inst;
    inst.id = i;
    for (int t = 0; t < video.num_frames; ++t) {
      const auto& m = video.gt[static_cast<size_t>(i)][static_cast<size_t>(t)];
      if (m) inst.masks.emplace(t, *m);
    }
    v.instances.push_back(std::move(inst));
  }
  out.videos.push_back(std::move(v));
  return out;
}

void cmd_synth(const PipelineConfig& config, const fs::path& out_dir) {
  config.validate();
  const DatasetPaths data{out_dir};
  const auto n = static_cast<size_t>(config.num_videos);
  std::vector<VideoLabels> gt(n);
  std::vector<std::vector<int>> assignment(n);
  std::vector<std::string> ids(n);
  parallel_for(
      n,
      [&](size_t k) {
        const SyntheticVideo video = synth_generate(config.synth, config.seed + k);
        ids[k] = video.id;
        gt[k] = ground_truth_labels(video).videos.front();
        assignment[k] = video.assignment;
        write_features(data.features(video.id), video.features);
        TrackFile tracks{video.id, video.num_frames, video.height, video.width, video.tracks};
        write_track_file(data.tracks(video.id), tracks);
      },
      config.threads);

  Labelset labels;
  labels.kind = LabelsetKind::kGroundTruth;
  labels.videos = std::move(gt);
  write_labelset(data.ground_truth(), labels);

  Json assign = Json::object();
  for (size_t k = 0; k < n; ++k) {
    Json list = Json::array();
    for (int a : assignment[k]) list.push_back(a == kNoiseInstance ? Json("NOISE") : Json(a));
    assign[ids[k]] = std::move(list);
  }
  write_json(data.gt_assignment(), Json{{"schema_version", kSchemaVersion}, {"videos", assign}});
  write_json(data.manifest(), Json{{"schema_version", kSchemaVersion},
                                   {"seed", config.seed},
                                   {"videos", ids},
                                   {"config", pipeline_config_to_json(config)}});
}

DiscoverOutput cmd_discover(const PipelineConfig& config, const fs::path& data_dir,
                            const fs::path& labels_out, const fs::path& report_out) {
  config.validate();
  const DatasetPaths data{data_dir};
  const std::vector<std::string> ids = dataset_video_ids(data);
  if (ids.empty()) throw InputError("no videos under '" + data_dir.string() + "'");
  std::vector<VideoDiscovery> results(ids.size());
  parallel_for(
      ids.size(),
      [&](size_t k) {
        const TrackFile file = read_track_file(data.tracks(ids[k]));
        const std::string id = file.id.empty() ? ids[k] : file.id;
        if (file.tracks.empty()) {
          VideoDiscovery empty;
          empty.labels.id = id;
          empty.labels.num_frames = file.num_frames;
          empty.labels.discarded = true;
          empty.report.video_id = id;
          empty.report.discarded = true;
          results[k] = std::move(empty);
          return;
        }
        results[k] = discover_video(id, file.num_frames, file.tracks, config.discovery);
      },
      config.threads);

  DiscoverOutput out;
  out.labels.kind = LabelsetKind::kSparse;
  Json videos = Json::array();
  Json discarded = Json::array();
  int total_masks = 0, total_instances = 0, total_outliers = 0;
  for (auto& r : results) {
    const VideoDiscoveryReport& rep = r.report;
    Json assignment = Json::array();
    for (int a : r.mask_assignment) assignment.push_back(a == kNoise ? Json("NOISE") : Json(a));
    videos.push_back(Json{{"id", rep.video_id},
                          {"status", rep.discarded ? "DISCARDED" : "OK"},
                          {"num_masks", rep.num_masks},
                          {"num_groups", rep.num_groups},
                          {"num_outliers", rep.num_outliers},
                          {"num_subgroups", rep.num_subgroups},
                          {"num_dropped_members", rep.num_dropped_members},
                          {"num_instances", rep.num_instances},
                          {"mask_assignment", std::move(assignment)}});
    if (rep.discarded) discarded.push_back(rep.video_id);
    total_masks += rep.num_masks;
    total_instances += rep.num_instances;
    total_outliers += rep.num_outliers;
    out.labels.videos.push_back(std::move(r.labels));
  }
  out.report = Json{{"schema_version", kSchemaVersion},
                    {"videos", std::move(videos)},
                    {"discarded", std::move(discarded)},
                    {"totals",
                     {{"num_videos", ids.size()},
                      {"num_masks", total_masks},
                      {"num_outliers", total_outliers},
                      {"num_instances", total_instances}}}};
  if (!labels_out.empty()) write_labelset(labels_out, out.labels);
  if (!report_out.empty()) write_json(report_out, out.report);
  return out;
}

namespace {

struct LoadedVideos {
  std::vector<std::unique_ptr<FeatureVideo>> storage;
  FeatureIndex index;
};

LoadedVideos load_videos(const DatasetPaths& data, const std::vector<std::string>& ids,
                         int threads) {
  LoadedVideos out;
  out.storage.resize(ids.size());
  parallel_for(
      ids.size(),
      [&](size_t k) {
        out.storage[k] = std::make_unique<FeatureVideo>(read_features(data.features(ids[k])));
      },
      threads);
  for (size_t k = 0; k < ids.size(); ++k) out.index[ids[k]] = out.storage[k].get();
  return out;
}

std::string log_lines(const std::vector<StepLog>& log) {
  std::string out;
  for (const StepLog& s : log) {
    out += Json{{"step", s.step},
                {"droploss", number_or_null(s.droploss)},
                {"distill_loss", number_or_null(s.distill_loss)},
                {"total", number_or_null(s.total)}}
               .dump();
    out += '\n';
  }
  return out;
}

}  // namespace

TrainOutput cmd_train(const PipelineConfig& config, int stage, const fs::path& labels_path,
                      const fs::path& data_dir, const fs::path& out_dir) {
  config.validate();
  if (stage != 1 && stage != 2) throw InputError("--stage must be 1 or 2");
  const Labelset labels = read_labelset(labels_path);
  if (stage == 2 && labels.kind != LabelsetKind::kDense) {
    throw InputError("stage 2 needs the dense labelset written by stage 1, got a '" +
                     std::string(to_string(labels.kind)) + "' labelset from " +
                     labels_path.string());
  }
  const DatasetPaths data{data_dir};
  const LoadedVideos videos = load_videos(data, dataset_video_ids(data), config.threads);
  for (const auto& v : labels.videos) {
    if (!v.discarded && videos.index.count(v.id) == 0) {
      throw InputError("labelset video '" + v.id + "' is not in " + data_dir.string());
    }
  }
  TrainOutput out;
  out.result = stage == 1 ? train_stage1(labels, videos.index, config.train)
                          : train_stage2(labels, videos.index, config.train);
  out.dense = densify(out.result.teacher, videos.index, config.train.threshold,
                      config.train.area_floor);
  write_model(out_dir / "model.kmm", out.result.teacher);
  write_labelset(out_dir / "dense.json", out.dense);
  write_file_atomic(out_dir / "train_log.jsonl", log_lines(out.result.log));
  return out;
}

Json metrics_json(const Labelset& preds, const Labelset& gts, const PipelineConfig& config,
                  const EvalOptions& options) {
  int64_t num_gt = 0;
  for (const auto& v : gts.videos) num_gt += static_cast<int64_t>(v.instances.size());
  Json out{{"schema_version", kSchemaVersion},
           {"num_videos", gts.videos.size()},
           {"num_gt_instances", num_gt}};
  if (options.ap) {
    const ApResult ap = video_ap(preds, gts, config.ap_thresholds);
    out["AP"] = number_or_null(ap.ap);
    out["AP50"] = number_or_null(ap.ap50);
    out["AP75"] = number_or_null(ap.ap75);
    Json per = Json::object();
    for (size_t k = 0; k < ap.thresholds.size(); ++k) {
      per[threshold_key(ap.thresholds[k])] = ap.per_threshold[k];
    }
    out["AP_per_threshold"] = std::move(per);
  }
  if (options.jf) {
    const JfResult jf = dataset_j_and_f(preds, gts, config.boundary_tol);
    out["J"] = jf.j;
    out["F"] = jf.f;
    out["JF"] = jf.jf;
  }
  return out;
}

Json cmd_eval(const PipelineConfig& config, const fs::path& pred_path, const fs::path& gt_path,
              const fs::path& data_dir, const EvalOptions& options, const fs::path& out_path) {
  config.validate();
  const Labelset gts = read_labelset(gt_path);
  const std::string bytes = read_file(pred_path);
  const size_t first = bytes.find_first_not_of(" \t\r\n");
  Labelset preds;
  if (first != std::string::npos && bytes[first] == '{') {
    preds = labelset_from_json(parse_json(bytes, pred_path.string()), pred_path.string());
  } else {
    if (data_dir.empty()) throw InputError("evaluating a model needs --data");
    const ToyPropagator model = decode_model(bytes, pred_path.string());
    std::vector<std::string> ids;
    for (const auto& v : gts.videos) ids.push_back(v.id);
    const LoadedVideos videos = load_videos(DatasetPaths{data_dir}, ids, config.threads);
    preds = densify(model, videos.index, config.train.threshold, config.train.area_floor);
    preds.kind = LabelsetKind::kPrediction;
  }
  std::vector<std::string> missing;
  for (const auto& v : gts.videos) {
    if (preds.find(v.id) == nullptr) missing.push_back(v.id);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw InputError("predictions are missing " + std::to_string(missing.size()) +
                     " ground-truth video(s): " + list);
  }
  Json metrics = metrics_json(preds, gts, config, options);
  if (!out_path.empty()) write_json(out_path, metrics);
  return metrics;
}

}  // namespace keymask
