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

#include <map>
#include <string>
#include <vector>

#include "keymask/mask.hpp"

namespace keymask {

// Masks of one video instance keyed by frame. Frames without an entry are
// unannotated.
struct InstanceLabels {
  int id = 0;
  std::map<int, RleMask> masks;
  // Index of the single-frame mask that supplied each entry, when known.
  std::map<int, int> sources;
  double score = 1.0;

  friend bool operator==(const InstanceLabels&, const InstanceLabels&) = default;
};

struct VideoLabels {
  std::string id;
  int num_frames = 0;
  std::vector<InstanceLabels> instances;
  bool discarded = false;

  friend bool operator==(const VideoLabels&, const VideoLabels&) = default;
};

// One schema serves every stage; `kind` records which stage produced it.
enum class LabelsetKind { kSparse, kDense, kGroundTruth, kPrediction };

struct Labelset {
  LabelsetKind kind = LabelsetKind::kSparse;
  std::vector<VideoLabels> videos;

  const VideoLabels* find(const std::string& id) const;

  friend bool operator==(const Labelset&, const Labelset&) = default;
};

const char* to_string(LabelsetKind kind);
LabelsetKind labelset_kind_from_string(const std::string& s);

// Every instance's annotated frames form one contiguous run.
bool is_dense(const VideoLabels& video);
bool is_dense(const Labelset& labels);

}  // namespace keymask
