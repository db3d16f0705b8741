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

#include <span>
#include <string>
#include <vector>

#include "keymask/dbscan.hpp"
#include "keymask/labelset.hpp"
#include "keymask/track.hpp"

namespace keymask {

inline constexpr double kDefaultLambdaJ = 0.5;

struct DiscoveryConfig {
  double gamma_thr = kDefaultGammaThr;
  double lambda_j = kDefaultLambdaJ;
  DbscanParams visibility_dbscan;
  DbscanParams matching_dbscan;
};

// Single-frame masks whose tracks appear and disappear together. Members are
// indices into the video's track list.
struct VisibilityGroup {
  std::vector<int> members;
  std::vector<VisibilityVector> vectors;
};

struct VisibilityGrouping {
  std::vector<VisibilityGroup> groups;
  std::vector<int> outliers;
};

VisibilityGrouping group_by_visibility(std::span<const InstanceTrack> tracks,
                                       double gamma_thr, const DbscanParams& params);

// Fraction of the track's N points that land inside `mask` at frame t. All
// points count in the denominator whether or not they are visible.
double point_mask_jaccard(const InstanceTrack& track, const RleMask& mask, int t);

// Point-mask matches between the members of one visibility group.
//
// Conceptually a boolean tensor M[i][k][t]; since mask k exists only at its
// own frame, storage is an N x N matrix plus the frame of each mask. Entry
// (i, k) is evaluated only if track i is visible (ratio > gamma_thr) at the
// frame of mask k.
class MatchingMatrix {
 public:
  MatchingMatrix() = default;
  MatchingMatrix(std::vector<int> members, std::vector<int> frames, int num_frames);

  int size() const { return static_cast<int>(members_.size()); }
  int num_frames() const { return num_frames_; }
  const std::vector<int>& members() const { return members_; }

  // Local index -> track index / frame of that member's mask.
  int member(int local) const { return members_[static_cast<size_t>(local)]; }
  int frame_of(int local) const { return frames_[static_cast<size_t>(local)]; }

  double jaccard(int i, int k) const { return jaccard_[index(i, k)]; }
  bool matched(int i, int k) const { return matched_[index(i, k)] != 0; }
  bool at(int i, int k, int t) const { return t == frame_of(k) && matched(i, k); }

  void set(int i, int k, double jaccard, bool matched) {
    jaccard_[index(i, k)] = jaccard;
    matched_[index(i, k)] = matched ? 1 : 0;
  }

 private:
  size_t index(int i, int k) const { return static_cast<size_t>(i) * members_.size() + k; }

  std::vector<int> members_;
  std::vector<int> frames_;
  int num_frames_ = 0;
  std::vector<double> jaccard_;
  std::vector<uint8_t> matched_;
};

MatchingMatrix build_matching_matrix(const VisibilityGroup& group,
                                     std::span<const InstanceTrack> tracks,
                                     double gamma_thr, double lambda_j);

// Per member: the track index of the best-matching mask at each frame, or
// kNoMatch. Ties on the Jaccard value go to the lower track index.
std::vector<Sequence> matching_tracks(const MatchingMatrix& matrix);

struct Subgrouping {
  std::vector<std::vector<int>> subgroups;  // track indices
  std::vector<int> noise;                   // dropped members, track indices
};

// Members whose matching track contains no mask besides their own are
// dropped first; the rest are clustered with DBSCAN over matching tracks
// (per-frame mismatch count) and noise is dropped.
Subgrouping subgroup_by_matching(const MatchingMatrix& matrix, const DbscanParams& params);

// Builds one instance per subgroup. Where several members share a frame the
// mask with the highest mean Jaccard received from the other members' tracks
// wins (ties to the lower index). Cross-instance overlap at a frame must stay
// below 10% of the smaller mask; the instance with fewer members gives up its
// mask otherwise. A video left with no instance is marked discarded.
VideoLabels assemble_keymasks(const std::string& video_id, int num_frames,
                              std::span<const std::vector<int>> subgroups,
                              std::span<const InstanceTrack> tracks);

inline constexpr double kMaxInstanceOverlap = 0.1;

struct VideoDiscoveryReport {
  std::string video_id;
  int num_masks = 0;
  int num_groups = 0;
  int num_outliers = 0;
  int num_subgroups = 0;
  int num_dropped_members = 0;
  int num_instances = 0;
  bool discarded = false;
};

struct VideoDiscovery {
  VideoLabels labels;
  VideoDiscoveryReport report;
  // Subgroup (instance candidate) of every single-frame mask, or kNoise.
  std::vector<int> mask_assignment;
};

// Full keymask pipeline for one video.
VideoDiscovery discover_video(const std::string& video_id, int num_frames,
                              std::span<const InstanceTrack> tracks,
                              const DiscoveryConfig& config);

}  // namespace keymask
