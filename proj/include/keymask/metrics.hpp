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

#include <optional>
#include <utility>
#include <vector>

#include "keymask/labelset.hpp"
#include "keymask/mask.hpp"

namespace keymask {

// One instance over a whole video; nullopt frames count as empty.
using MaskTrack = std::vector<std::optional<RleMask>>;

MaskTrack to_track(const InstanceLabels& instance, int num_frames);

// Sum of per-frame intersections over sum of per-frame unions; 1.0 when
// both tracks are empty everywhere. Throws DimensionError on length mismatch.
double st_iou(const MaskTrack& a, const MaskTrack& b);

std::vector<double> default_ap_thresholds();

struct ApResult {
  std::vector<double> thresholds;
  std::vector<double> per_threshold;
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
};

// Class-agnostic video AP pooled over all videos of `gts`. Predictions are
// taken in descending score order (ties by video then instance order) and
// matched to the unmatched ground truth of the same video with highest
// st_iou, if that reaches the threshold. Precision is interpolated at 101
// recall points. With no ground truth at all, AP is 1 if there are also no
// predictions and 0 otherwise. ap50/ap75 are NaN when those thresholds are
// not evaluated.
ApResult video_ap(const Labelset& preds, const Labelset& gts,
                  const std::vector<double>& thresholds = default_ap_thresholds());

// Foreground pixels with a 4-neighbour that is background or off-image.
std::vector<std::pair<int, int>> boundary_pixels(const Bitmap& mask);

// Boundary F-measure with one-to-one matching of boundary pixels no further
// apart than `tol` (Euclidean). 1.0 when both masks are empty.
double boundary_f(const RleMask& pred, const RleMask& gt, double tol);

int default_boundary_tolerance(int height, int width);

struct JfResult {
  double j = 0.0;
  double f = 0.0;
  double jf = 0.0;
};

// Means over frames where either mask is non-empty; J = F = 1 if there are
// none. `tol` < 0 selects default_boundary_tolerance. Throws DimensionError
// on length mismatch.
JfResult j_and_f(const MaskTrack& pred, const MaskTrack& gt, double tol = -1.0);

// Every ground-truth instance is paired with a prediction of the same video
// by minimum-cost assignment on 1 - st_iou; unpaired instances score zero.
// Means are over ground-truth instances.
JfResult dataset_j_and_f(const Labelset& preds, const Labelset& gts, double tol = -1.0);

// Pairwise agreement of two labelings. Negative labels are singletons.
double rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace keymask
