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
#include <optional>
#include <string>
#include <vector>

#include "keymask/mask.hpp"
#include "keymask/track.hpp"

namespace keymask {

// Per-pixel feature frames, laid out [frame][row][col][channel].
class FeatureVideo {
 public:
  FeatureVideo() = default;
  FeatureVideo(int frames, int height, int width, int channels);

  int frames() const { return frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }

  float at(int t, int row, int col, int c) const { return data_[index(t, row, col, c)]; }
  float& at(int t, int row, int col, int c) { return data_[index(t, row, col, c)]; }

  // Contiguous feature vector of one pixel.
  const float* pixel(int t, int row, int col) const {
    return data_.data() + index(t, row, col, 0);
  }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  friend bool operator==(const FeatureVideo&, const FeatureVideo&) = default;

 private:
  size_t index(int t, int row, int col, int c) const {
    return ((static_cast<size_t>(t) * height_ + row) * width_ + col) * channels_ + c;
  }

  int frames_ = 0;
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Feature channel layout of generated videos.
inline constexpr int kPaletteChannels = 4;
inline constexpr int kClutterChannel = 4;
inline constexpr int kColChannel = 5;
inline constexpr int kRowChannel = 6;
inline constexpr int kFrameChannel = 7;
inline constexpr int kFeatureChannels = 8;

enum class MotionType { kTranslate, kScale, kPartialOcclusion };
enum class ShapeKind { kEllipse, kRectangle };

// Analytic instance geometry at frame 0. Position at frame t is
// center + t * velocity; extents are scaled by max(0.5, 1 + scale_rate * (t - mid)).
struct InstanceGeometry {
  ShapeKind shape = ShapeKind::kEllipse;
  double center_x = 0.0;
  double center_y = 0.0;
  double radius_x = 10.0;
  double radius_y = 10.0;
  double velocity_x = 0.0;
  double velocity_y = 0.0;
  double scale_rate = 0.0;
};

struct InstanceSpec {
  MotionType motion = MotionType::kTranslate;
  int appear_start = 0;
  int appear_end = -1;  // inclusive; -1 means the last frame
  std::optional<InstanceGeometry> geometry;  // sampled from the seed if absent
};

struct SynthConfig {
  int num_frames = 20;
  int height = 96;
  int width = 96;
  // Instance count is drawn uniformly from [min_instances, max_instances]
  // unless `instances` is given explicitly.
  int min_instances = 1;
  int max_instances = 4;
  std::vector<InstanceSpec> instances;
  std::vector<MotionType> motions = {MotionType::kTranslate, MotionType::kScale,
                                     MotionType::kPartialOcclusion};
  bool staggered = true;  // sample partial appearance windows
  // Injected noise masks, as a fraction of the real single-frame masks.
  double noise_rate = 0.2;
  // Noise tracks stay visible for at most this many frames on each side.
  int noise_life = 2;
  double duplicate_rate = 0.0;  // extra jittered copy of a real mask
  double miss_rate = 0.0;       // real mask dropped by the detector
  double drift_rate = 0.0;      // real mask whose points wander off
  // Instance radii as a fraction of the shorter image side.
  double min_radius = 0.16;
  double max_radius = 0.24;
  int jitter = 1;               // max dilation/erosion and shift in pixels
  int grid_spacing = kDefaultGridSpacing;
  int min_mask_area = 12;
  int occluder_width = 4;
  double feature_noise = 0.1;
};

inline constexpr int kNoiseInstance = -1;

struct SyntheticVideo {
  std::string id;
  uint64_t seed = 0;
  int num_frames = 0;
  int height = 0;
  int width = 0;
  FeatureVideo features;
  // gt[instance][frame]; absent where the instance is not visible.
  std::vector<std::vector<std::optional<RleMask>>> gt;
  // One track per single-frame mask, ordered by frame.
  std::vector<InstanceTrack> tracks;
  // Ground-truth instance of each track's mask, or kNoiseInstance.
  std::vector<int> assignment;
  std::vector<InstanceSpec> specs;  // resolved specs, geometry filled in

  int num_instances() const { return static_cast<int>(gt.size()); }
};

// Throws InputError for an invalid configuration.
void validate_config(const SynthConfig& config);

// Deterministic in (config, seed).
SyntheticVideo synth_generate(const SynthConfig& config, uint64_t seed);

std::string synth_video_id(uint64_t seed);

}  // namespace keymask
