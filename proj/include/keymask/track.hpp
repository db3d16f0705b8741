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
#include <string>
#include <vector>

#include "keymask/mask.hpp"

namespace keymask {

// One tracked point: its position and visibility at every frame.
struct Trajectory {
  std::vector<Point2> coords;
  std::vector<bool> visible;

  int num_frames() const { return static_cast<int>(coords.size()); }
};

// A single-frame mask together with the trajectories of the points seeded
// inside it. The mask is the instance's proxy; its trajectories propagate it
// forward and backward through the video.
struct InstanceTrack {
  std::string source_video;
  int source_frame = 0;
  RleMask source_mask;
  std::vector<Trajectory> trajectories;

  int num_points() const { return static_cast<int>(trajectories.size()); }
  int num_frames() const {
    return trajectories.empty() ? 0 : trajectories.front().num_frames();
  }
};

// Per-frame visibility bits of one instance track.
using VisibilityVector = std::vector<uint8_t>;

// Throws InputError when the track violates its invariants: no trajectories,
// ragged frame counts, or a seed point outside / invisible at the source
// frame.
void validate_track(const InstanceTrack& track);

inline constexpr int kDefaultGridSpacing = 8;

// Grid points at pixel centres with the given stride, offset by half a
// stride, that fall inside the mask. A mask too small to catch a grid point
// yields the foreground pixel centre closest to the mask centroid, so the
// result is never empty. Throws InputError for an empty mask or spacing < 1.
std::vector<Point2> init_point_grid(const RleMask& mask,
                                    int spacing = kDefaultGridSpacing);

// Fraction of the track's points visible at frame t.
double visibility_ratio(const InstanceTrack& track, int t);

inline constexpr double kDefaultGammaThr = 0.3;

// bits[t] = visibility_ratio(track, t) > gamma_thr.
VisibilityVector visibility_vector(const InstanceTrack& track,
                                   double gamma_thr = kDefaultGammaThr);

}  // namespace keymask
