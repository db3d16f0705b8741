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

#include "keymask/discovery.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "keymask/errors.hpp"

namespace keymask {

VisibilityGrouping group_by_visibility(std::span<const InstanceTrack> tracks,
                                       double gamma_thr, const DbscanParams& params) {
  VisibilityGrouping out;
  if (tracks.empty()) return out;
  std::vector<Sequence> vectors;
  vectors.reserve(tracks.size());
  for (const auto& track : tracks) {
    const VisibilityVector bits = visibility_vector(track, gamma_thr);
    vectors.emplace_back(bits.begin(), bits.end());
  }
  const double eps = params.resolve_eps(tracks.front().num_frames());
  const ClusterLabels labels = dbscan(vectors, eps, params.min_pts, hamming_metric);

  out.groups.resize(static_cast<size_t>(labels.num_clusters));
  for (size_t i = 0; i < tracks.size(); ++i) {
    const int label = labels.labels[i];
    if (label == kNoise) {
      out.outliers.push_back(static_cast<int>(i));
      continue;
    }
    auto& group = out.groups[static_cast<size_t>(label)];
    group.members.push_back(static_cast<int>(i));
    group.vectors.emplace_back(vectors[i].begin(), vectors[i].end());
  }
  return out;
}

double point_mask_jaccard(const InstanceTrack& track, const RleMask& mask, int t) {
  if (track.trajectories.empty()) throw InputError("point_mask_jaccard: track has no points");
  if (t < 0 || t >= track.num_frames()) throw DimensionError("point_mask_jaccard: frame out of range");
  if (mask.height() != track.source_mask.height() || mask.width() != track.source_mask.width()) {
    throw DimensionError("point_mask_jaccard: mask size differs from the track's video");
  }
  int inside = 0;
  for (const auto& traj : track.trajectories) {
    if (contains_point(mask, traj.coords[static_cast<size_t>(t)])) ++inside;
  }
  return static_cast<double>(inside) / track.num_points();
}

MatchingMatrix::MatchingMatrix(std::vector<int> members, std::vector<int> frames, int num_frames)
    : members_(std::move(members)),
      frames_(std::move(frames)),
      num_frames_(num_frames),
      jaccard_(members_.size() * members_.size(), 0.0),
      matched_(members_.size() * members_.size(), 0) {}

MatchingMatrix build_matching_matrix(const VisibilityGroup& group,
                                     std::span<const InstanceTrack> tracks,
                                     double gamma_thr, double lambda_j) {
  std::vector<int> frames;
  frames.reserve(group.members.size());
  for (int m : group.members) frames.push_back(tracks[static_cast<size_t>(m)].source_frame);
  const int num_frames =
      group.members.empty() ? 0 : tracks[static_cast<size_t>(group.members[0])].num_frames();
  MatchingMatrix matrix(group.members, std::move(frames), num_frames);

  for (int i = 0; i < matrix.size(); ++i) {
    const InstanceTrack& track = tracks[static_cast<size_t>(matrix.member(i))];
    for (int k = 0; k < matrix.size(); ++k) {
      const int t = matrix.frame_of(k);
      if (!(visibility_ratio(track, t) > gamma_thr)) continue;
      const double j = point_mask_jaccard(
          track, tracks[static_cast<size_t>(matrix.member(k))].source_mask, t);
      matrix.set(i, k, j, j > lambda_j);
    }
  }
  return matrix;
}

std::vector<Sequence> matching_tracks(const MatchingMatrix& matrix) {
  std::vector<Sequence> out(static_cast<size_t>(matrix.size()),
                            Sequence(static_cast<size_t>(matrix.num_frames()), kNoMatch));
  for (int i = 0; i < matrix.size(); ++i) {
    std::vector<double> best(static_cast<size_t>(matrix.num_frames()), -1.0);
    auto& seq = out[static_cast<size_t>(i)];
    for (int k = 0; k < matrix.size(); ++k) {
      if (!matrix.matched(i, k)) continue;
      const auto t = static_cast<size_t>(matrix.frame_of(k));
      const double j = matrix.jaccard(i, k);
      const int id = matrix.member(k);
      if (j > best[t] || (j == best[t] && id < seq[t])) {
        best[t] = j;
        seq[t] = id;
      }
    }
  }
  return out;
}

Subgrouping subgroup_by_matching(const MatchingMatrix& matrix, const DbscanParams& params) {
  Subgrouping out;
  const std::vector<Sequence> seqs = matching_tracks(matrix);

  std::vector<int> kept;  // local indices
  std::vector<Sequence> kept_seqs;
  for (int i = 0; i < matrix.size(); ++i) {
    const int self = matrix.member(i);
    const auto& seq = seqs[static_cast<size_t>(i)];
    const bool matches_other = std::any_of(seq.begin(), seq.end(), [self](int32_t v) {
      return v != kNoMatch && v != self;
    });
    if (matches_other) {
      kept.push_back(i);
      kept_seqs.push_back(seq);
    } else {
      out.noise.push_back(self);
    }
  }
  if (kept.empty()) return out;

  const double eps = params.resolve_eps(matrix.num_frames());
  const ClusterLabels labels = dbscan(kept_seqs, eps, params.min_pts, hamming_metric);
  out.subgroups.resize(static_cast<size_t>(labels.num_clusters));
  for (size_t n = 0; n < kept.size(); ++n) {
    const int member = matrix.member(kept[n]);
    if (labels.labels[n] == kNoise) {
      out.noise.push_back(member);
    } else {
      out.subgroups[static_cast<size_t>(labels.labels[n])].push_back(member);
    }
  }
  std::sort(out.noise.begin(), out.noise.end());
  return out;
}

VideoLabels assemble_keymasks(const std::string& video_id, int num_frames,
                              std::span<const std::vector<int>> subgroups,
                              std::span<const InstanceTrack> tracks) {
  VideoLabels video;
  video.id = video_id;
  video.num_frames = num_frames;

  std::vector<int> sizes;
  for (const auto& members : subgroups) {
    std::map<int, std::vector<int>> by_frame;
    for (int m : members) by_frame[tracks[static_cast<size_t>(m)].source_frame].push_back(m);

    InstanceLabels inst;
    for (auto& [t, candidates] : by_frame) {
      std::sort(candidates.begin(), candidates.end());
      int chosen = candidates.front();
      if (candidates.size() > 1) {
        double best = -1.0;
        for (int k : candidates) {
          double sum = 0.0;
          int count = 0;
          for (int i : members) {
            if (i == k) continue;
            sum += point_mask_jaccard(tracks[static_cast<size_t>(i)],
                                      tracks[static_cast<size_t>(k)].source_mask, t);
            ++count;
          }
          const double score = count > 0 ? sum / count : 0.0;
          if (score > best) {
            best = score;
            chosen = k;
          }
        }
      }
      inst.masks.emplace(t, tracks[static_cast<size_t>(chosen)].source_mask);
      inst.sources.emplace(t, chosen);
    }
    video.instances.push_back(std::move(inst));
    sizes.push_back(static_cast<int>(members.size()));
  }

  // Overlap cap between distinct instances at a shared frame.
  const int n = static_cast<int>(video.instances.size());
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      auto& ia = video.instances[static_cast<size_t>(a)];
      auto& ib = video.instances[static_cast<size_t>(b)];
      for (int t = 0; t < num_frames; ++t) {
        auto fa = ia.masks.find(t);
        auto fb = ib.masks.find(t);
        if (fa == ia.masks.end() || fb == ib.masks.end()) continue;
        const double smaller = static_cast<double>(
            std::min(fa->second.area(), fb->second.area()));
        const double inter = static_cast<double>(intersection_area(fa->second, fb->second));
        if (smaller == 0 || inter / smaller < kMaxInstanceOverlap) continue;
        auto& loser = sizes[static_cast<size_t>(a)] >= sizes[static_cast<size_t>(b)] ? ib : ia;
        loser.masks.erase(t);
        loser.sources.erase(t);
      }
    }
  }

  std::vector<InstanceLabels> kept;
  for (auto& inst : video.instances) {
    if (inst.masks.empty()) continue;
    inst.id = static_cast<int>(kept.size());
    kept.push_back(std::move(inst));
  }
  video.instances = std::move(kept);
  video.discarded = video.instances.empty();
  return video;
}

VideoDiscovery discover_video(const std::string& video_id, int num_frames,
                              std::span<const InstanceTrack> tracks,
                              const DiscoveryConfig& config) {
  if (!(config.lambda_j > 0.0 && config.lambda_j < 1.0)) {
    throw InputError("lambda_j must lie in (0, 1)");
  }
  for (const auto& track : tracks) {
    validate_track(track);
    if (track.num_frames() != num_frames) {
      throw InputError("video " + video_id + ": track length " +
                       std::to_string(track.num_frames()) + " != T " + std::to_string(num_frames));
    }
  }

  VideoDiscovery out;
  out.report.video_id = video_id;
  out.report.num_masks = static_cast<int>(tracks.size());
  out.mask_assignment.assign(tracks.size(), kNoise);

  const VisibilityGrouping grouping =
      group_by_visibility(tracks, config.gamma_thr, config.visibility_dbscan);
  out.report.num_groups = static_cast<int>(grouping.groups.size());
  out.report.num_outliers = static_cast<int>(grouping.outliers.size());

  std::vector<std::vector<int>> subgroups;
  for (const auto& group : grouping.groups) {
    const MatchingMatrix matrix =
        build_matching_matrix(group, tracks, config.gamma_thr, config.lambda_j);
    Subgrouping split = subgroup_by_matching(matrix, config.matching_dbscan);
    out.report.num_dropped_members += static_cast<int>(split.noise.size());
    for (auto& sg : split.subgroups) subgroups.push_back(std::move(sg));
  }
  out.report.num_subgroups = static_cast<int>(subgroups.size());
  for (size_t s = 0; s < subgroups.size(); ++s) {
    for (int m : subgroups[s]) out.mask_assignment[static_cast<size_t>(m)] = static_cast<int>(s);
  }

  out.labels = assemble_keymasks(video_id, num_frames, subgroups, tracks);
  out.report.num_instances = static_cast<int>(out.labels.instances.size());
  out.report.discarded = out.labels.discarded;
  return out;
}

}  // namespace keymask
