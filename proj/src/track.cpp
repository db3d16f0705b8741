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

#include "keymask/track.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "keymask/errors.hpp"

namespace keymask {

void validate_track(const InstanceTrack& track) {
  if (track.trajectories.empty()) {
    throw InputError("instance track has no trajectories");
  }
  const int frames = track.num_frames();
  if (frames < 1) throw InputError("trajectory has no frames");
  if (track.source_frame < 0 || track.source_frame >= frames) {
    throw InputError("source frame " + std::to_string(track.source_frame) +
                     " outside [0, " + std::to_string(frames) + ")");
  }
  for (const auto& traj : track.trajectories) {
    if (traj.num_frames() != frames ||
        static_cast<int>(traj.visible.size()) != frames) {
      throw InputError("trajectories of one track must share a frame count");
    }
    const auto t0 = static_cast<size_t>(track.source_frame);
    if (!traj.visible[t0] || !contains_point(track.source_mask, traj.coords[t0])) {
      throw InputError("seed point not visible inside its source mask");
    }
  }
}

std::vector<Point2> init_point_grid(const RleMask& mask, int spacing) {
  if (spacing < 1) throw InputError("grid spacing must be >= 1");
  if (mask.is_empty()) throw InputError("cannot seed points in an empty mask");

  std::vector<Point2> points;
  const int offset = spacing / 2;
  for (int row = offset; row < mask.height(); row += spacing) {
    for (int col = offset; col < mask.width(); col += spacing) {
      if (mask.pixel(row, col)) points.push_back({col + 0.5, row + 0.5});
    }
  }
  if (!points.empty()) return points;

  // Fallback: foreground pixel nearest the centroid.
  const Bitmap bits = rle_decode(mask);
  double sum_r = 0.0, sum_c = 0.0;
  for (int r = 0; r < bits.height(); ++r) {
    for (int c = 0; c < bits.width(); ++c) {
      if (bits.at(r, c)) {
        sum_r += r + 0.5;
        sum_c += c + 0.5;
      }
    }
  }
  const double n = static_cast<double>(mask.area());
  const double cr = sum_r / n, cc = sum_c / n;
  double best = std::numeric_limits<double>::infinity();
  Point2 chosen;
  for (int c = 0; c < bits.width(); ++c) {
    for (int r = 0; r < bits.height(); ++r) {
      if (!bits.at(r, c)) continue;
      const double d = std::hypot(r + 0.5 - cr, c + 0.5 - cc);
      if (d < best) {
        best = d;
        chosen = {c + 0.5, r + 0.5};
      }
    }
  }
  points.push_back(chosen);
  return points;
}

double visibility_ratio(const InstanceTrack& track, int t) {
  if (t < 0 || t >= track.num_frames()) {
    throw std::out_of_range("frame " + std::to_string(t) + " out of range");
  }
  if (track.trajectories.empty()) return 0.0;
  int visible = 0;
  for (const auto& traj : track.trajectories) {
    if (traj.visible[static_cast<size_t>(t)]) ++visible;
  }
  return static_cast<double>(visible) / track.num_points();
}

VisibilityVector visibility_vector(const InstanceTrack& track,
                                   double gamma_thr) {
  if (!(gamma_thr > 0.0 && gamma_thr < 1.0)) {
    throw InputError("gamma_thr must lie in (0, 1)");
  }
  VisibilityVector bits(static_cast<size_t>(track.num_frames()));
  for (int t = 0; t < track.num_frames(); ++t) {
    bits[static_cast<size_t>(t)] = visibility_ratio(track, t) > gamma_thr ? 1 : 0;
  }
  return bits;
}

}  // namespace keymask
