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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "keymask/discovery.hpp"
#include "keymask/io.hpp"
#include "keymask/metrics.hpp"
#include "keymask/synth.hpp"
#include "keymask/training.hpp"

namespace keymask {

struct PipelineConfig {
  uint64_t seed = 0;
  int num_videos = 20;
  SynthConfig synth;
  DiscoveryConfig discovery;
  TrainConfig train;
  // Negative selects the default tolerance from the image diagonal.
  double boundary_tol = -1.0;
  std::vector<double> ap_thresholds = default_ap_thresholds();
  int threads = 0;

  // Throws InputError.
  void validate() const;
};

// Full configuration with every field present.
Json pipeline_config_to_json(const PipelineConfig& config);
// Missing fields keep their defaults; unknown fields are a FormatError.
PipelineConfig pipeline_config_from_json(const Json& j, const std::string& origin);

// Applies "section.key=value" to a config document. The value is parsed as
// JSON when possible and taken as a string otherwise.
void apply_override(Json& doc, const std::string& assignment);

// Defaults, then the optional JSON file, then overrides in order.
PipelineConfig load_pipeline_config(const std::optional<std::filesystem::path>& path,
                                    const std::vector<std::string>& overrides);

// Dataset directory layout.
struct DatasetPaths {
  std::filesystem::path root;

  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path ground_truth() const { return root / "gt.json"; }
  std::filesystem::path gt_assignment() const { return root / "gt_assignment.json"; }
  std::filesystem::path features(const std::string& id) const {
    return root / "features" / (id + ".kmf");
  }
  std::filesystem::path tracks(const std::string& id) const {
    return root / "tracks" / (id + ".json");
  }
};

// Video ids of a dataset: the manifest's list, or the sorted track file stems
// when there is no manifest.
std::vector<std::string> dataset_video_ids(const DatasetPaths& data);

Labelset ground_truth_labels(const SyntheticVideo& video);

// Generates num_videos videos with seeds seed, seed+1, ... and writes the
// manifest, feature frames, track files, ground-truth labelset and the
// ground-truth mask assignment.
void cmd_synth(const PipelineConfig& config, const std::filesystem::path& out_dir);

struct DiscoverOutput {
  Labelset labels;
  Json report;
};

// Keymask discovery over every track file of the dataset. Writes the sparse
// labelset and the report when the paths are non-empty.
DiscoverOutput cmd_discover(const PipelineConfig& config, const std::filesystem::path& data_dir,
                            const std::filesystem::path& labels_out,
                            const std::filesystem::path& report_out);

struct TrainOutput {
  TrainResult result;
  Labelset dense;
};

// Stage 1 trains on sparse labels; stage 2 requires a dense labelset. Both
// write model.kmm (the teacher), dense.json (its densified predictions) and
// train_log.jsonl into out_dir.
TrainOutput cmd_train(const PipelineConfig& config, int stage,
                      const std::filesystem::path& labels_path,
                      const std::filesystem::path& data_dir, const std::filesystem::path& out_dir);

struct EvalOptions {
  bool ap = true;
  bool jf = true;
};

// Predictions come from a labelset file, or from a model file densified on
// the dataset's videos. Every ground-truth video must have predictions.
Json cmd_eval(const PipelineConfig& config, const std::filesystem::path& pred_path,
              const std::filesystem::path& gt_path, const std::filesystem::path& data_dir,
              const EvalOptions& options, const std::filesystem::path& out_path);

Json metrics_json(const Labelset& preds, const Labelset& gts, const PipelineConfig& config,
                  const EvalOptions& options);

}  // namespace keymask
