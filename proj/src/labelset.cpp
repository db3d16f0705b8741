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

#include "keymask/labelset.hpp"

#include "keymask/errors.hpp"

namespace keymask {

const VideoLabels* Labelset::find(const std::string& id) const {
  for (const auto& v : videos) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

const char* to_string(LabelsetKind kind) {
  switch (kind) {
    case LabelsetKind::kSparse: return "sparse";
    case LabelsetKind::kDense: return "dense";
    case LabelsetKind::kGroundTruth: return "gt";
    case LabelsetKind::kPrediction: return "prediction";
  }
  return "sparse";
}

LabelsetKind labelset_kind_from_string(const std::string& s) {
  if (s == "sparse") return LabelsetKind::kSparse;
  if (s == "dense") return LabelsetKind::kDense;
  if (s == "gt") return LabelsetKind::kGroundTruth;
  if (s == "prediction") return LabelsetKind::kPrediction;
  throw FormatError("unknown labelset kind '" + s + "'");
}

bool is_dense(const VideoLabels& video) {
  for (const auto& inst : video.instances) {
    if (inst.masks.empty()) continue;
    const int first = inst.masks.begin()->first;
    const int last = inst.masks.rbegin()->first;
    if (last - first + 1 != static_cast<int>(inst.masks.size())) return false;
  }
  return true;
}

bool is_dense(const Labelset& labels) {
  for (const auto& v : labels.videos) {
    if (!is_dense(v)) return false;
  }
  return true;
}

}  // namespace keymask
