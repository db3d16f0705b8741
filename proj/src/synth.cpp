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

#include "keymask/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "keymask/errors.hpp"

namespace keymask {

FeatureVideo::FeatureVideo(int frames, int height, int width, int channels)
    : frames_(frames),
      height_(height),
      width_(width),
      channels_(channels),
      data_(static_cast<size_t>(frames) * height * width * channels, 0.0f) {}

namespace {

using Rng = std::mt19937_64;

constexpr int kOccluderOwner = -2;
constexpr int kBackgroundOwner = -1;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

bool coin(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

struct Scene {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<InstanceSpec> specs;
  bool has_occluder = false;
  int occluder_begin = 0;  // columns [begin, end)
  int occluder_end = 0;
  double min_radius = 0.16;
  double max_radius = 0.24;

  const InstanceGeometry& geom(int i) const { return *specs[static_cast<size_t>(i)].geometry; }

  bool present(int i, int t) const {
    const auto& s = specs[static_cast<size_t>(i)];
    return t >= s.appear_start && t <= s.appear_end;
  }

  double scale(int i, int t) const {
    const double mid = (frames - 1) / 2.0;
    return std::max(0.5, 1.0 + geom(i).scale_rate * (t - mid));
  }

  Point2 center(int i, int t) const {
    const auto& g = geom(i);
    return {g.center_x + t * g.velocity_x, g.center_y + t * g.velocity_y};
  }

  double max_extent(int i, int t) const {
    return std::max(geom(i).radius_x, geom(i).radius_y) * scale(i, t);
  }

  bool shape_contains(int i, int t, double x, double y) const {
    const auto& g = geom(i);
    const double s = scale(i, t);
    const Point2 c = center(i, t);
    const double dx = (x - c.x) / (g.radius_x * s);
    const double dy = (y - c.y) / (g.radius_y * s);
    if (g.shape == ShapeKind::kEllipse) return dx * dx + dy * dy <= 1.0;
    return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
  }

  bool in_occluder(double x) const {
    if (!has_occluder) return false;
    const double col = std::floor(x);
    return col >= occluder_begin && col < occluder_end;
  }

  // Front-to-back order is instance index, highest closest.
  bool occluded_by_closer(int i, int t, double x, double y) const {
    for (int j = i + 1; j < static_cast<int>(specs.size()); ++j) {
      if (present(j, t) && shape_contains(j, t, x, y)) return true;
    }
    return false;
  }

  int owner(int t, int row, int col) const {
    const double x = col + 0.5, y = row + 0.5;
    if (in_occluder(x)) return kOccluderOwner;
    for (int i = static_cast<int>(specs.size()) - 1; i >= 0; --i) {
      if (present(i, t) && shape_contains(i, t, x, y)) return i;
    }
    return kBackgroundOwner;
  }
};

bool placement_ok(const Scene& scene, int index) {
  for (int t = scene.specs[static_cast<size_t>(index)].appear_start;
       t <= scene.specs[static_cast<size_t>(index)].appear_end; ++t) {
    const Point2 c = scene.center(index, t);
    const double r = scene.max_extent(index, t);
    if (c.x - r < 1.0 || c.x + r > scene.width - 1.0 || c.y - r < 1.0 ||
        c.y + r > scene.height - 1.0) {
      return false;
    }
    for (int j = 0; j < index; ++j) {
      if (!scene.present(j, t)) continue;
      const Point2 o = scene.center(j, t);
      const double min_dist = 0.85 * (r + scene.max_extent(j, t));
      if (std::hypot(c.x - o.x, c.y - o.y) < min_dist) return false;
    }
  }
  return true;
}

// Samples geometry for specs[index] given the already placed instances.
void place_instance(Scene& scene, int index, Rng& rng) {
  auto& spec = scene.specs[static_cast<size_t>(index)];
  const double size = std::min(scene.height, scene.width);
  const double mid = (spec.appear_start + spec.appear_end) / 2.0;
  for (int attempt = 0; attempt < 200; ++attempt) {
    InstanceGeometry g;
    g.shape = coin(rng, 0.7) ? ShapeKind::kEllipse : ShapeKind::kRectangle;
    g.radius_x = uniform(rng, scene.min_radius, scene.max_radius) * size;
    g.radius_y = std::clamp(g.radius_x * uniform(rng, 0.75, 1.25), scene.min_radius * size,
                            scene.max_radius * size);
    if (g.shape == ShapeKind::kRectangle) {
      g.radius_x *= 0.85;
      g.radius_y *= 0.85;
    }
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    double speed = 0.0;
    switch (spec.motion) {
      case MotionType::kTranslate:
        speed = uniform(rng, 0.4, 1.5);
        break;
      case MotionType::kScale:
        speed = uniform(rng, 0.0, 0.4);
        g.scale_rate = uniform(rng, 0.01, 0.025) * (coin(rng, 0.5) ? 1.0 : -1.0);
        break;
      case MotionType::kPartialOcclusion:
        speed = uniform(rng, 0.8, 1.6);
        break;
    }
    if (spec.motion == MotionType::kPartialOcclusion) {
      // Horizontal pass that is centred on the occluder mid-window.
      g.velocity_x = coin(rng, 0.5) ? speed : -speed;
      g.velocity_y = 0.0;
      const double occluder_mid = (scene.occluder_begin + scene.occluder_end) / 2.0;
      g.center_x = occluder_mid - g.velocity_x * mid;
      g.center_y = uniform(rng, 0.2, 0.8) * scene.height;
    } else {
      g.velocity_x = speed * std::cos(angle);
      g.velocity_y = speed * std::sin(angle);
      g.center_x = uniform(rng, 0.15, 0.85) * scene.width;
      g.center_y = uniform(rng, 0.15, 0.85) * scene.height;
      // Shift so the window midpoint lands on the sampled position.
      g.center_x -= g.velocity_x * mid;
      g.center_y -= g.velocity_y * mid;
    }
    spec.geometry = g;
    if (placement_ok(scene, index)) return;
  }
  // Crowded scene: keep the last sample.
}

InstanceSpec sample_spec(const SynthConfig& config, Rng& rng) {
  InstanceSpec spec;
  spec.motion = config.motions[static_cast<size_t>(
      uniform_int(rng, 0, static_cast<int>(config.motions.size()) - 1))];
  const int frames = config.num_frames;
  spec.appear_start = 0;
  spec.appear_end = frames - 1;
  if (config.staggered && frames > 2 && coin(rng, 0.5)) {
    const int min_len = std::max(2, static_cast<int>(std::ceil(0.4 * frames)));
    const int len = uniform_int(rng, min_len, std::max(min_len, frames - 1));
    spec.appear_start = uniform_int(rng, 0, frames - len);
    spec.appear_end = spec.appear_start + len - 1;
  }
  return spec;
}

Bitmap morph(const Bitmap& in, bool dilate) {
  Bitmap out(in.height(), in.width());
  static constexpr int kDr[] = {-1, 1, 0, 0};
  static constexpr int kDc[] = {0, 0, -1, 1};
  for (int r = 0; r < in.height(); ++r) {
    for (int c = 0; c < in.width(); ++c) {
      bool v = in.at(r, c);
      for (int k = 0; k < 4; ++k) {
        const int rr = r + kDr[k], cc = c + kDc[k];
        const bool n = in.in_bounds(rr, cc) && in.at(rr, cc);
        v = dilate ? (v || n) : (v && n);
      }
      out.set(r, c, v);
    }
  }
  return out;
}

RleMask jitter_mask(const RleMask& gt, const SynthConfig& config, Rng& rng) {
  if (config.jitter <= 0) return gt;
  const Bitmap base = rle_decode(gt);
  for (int attempt = 0; attempt < 4; ++attempt) {
    // One perturbation per mask: a grow, a shrink, or a shift.
    int grow = 0, dr = 0, dc = 0;
    switch (uniform_int(rng, 0, 2)) {
      case 0:
        grow = uniform_int(rng, 1, config.jitter);
        break;
      case 1:
        grow = -uniform_int(rng, 1, config.jitter);
        break;
      default:
        dr = uniform_int(rng, -config.jitter, config.jitter);
        dc = uniform_int(rng, -config.jitter, config.jitter);
        break;
    }
    Bitmap shaped = base;
    for (int k = 0; k < std::abs(grow); ++k) shaped = morph(shaped, grow > 0);
    Bitmap shifted(base.height(), base.width());
    for (int r = 0; r < base.height(); ++r) {
      for (int c = 0; c < base.width(); ++c) {
        const int sr = r - dr, sc = c - dc;
        if (shaped.in_bounds(sr, sc) && shaped.at(sr, sc)) shifted.set(r, c, true);
      }
    }
    if (shifted.count() < config.min_mask_area) continue;
    RleMask candidate = rle_encode(shifted);
    if (mask_iou(candidate, gt) >= 0.5) return candidate;
  }
  return gt;
}

struct PendingMask {
  int frame = 0;
  RleMask mask;
  int instance = kNoiseInstance;
  bool drift = false;
  int life_before = 0;  // noise only
  int life_after = 0;
};

InstanceTrack track_real_mask(const Scene& scene, const PendingMask& pm,
                              int spacing, Rng& rng) {
  InstanceTrack track;
  track.source_frame = pm.frame;
  track.source_mask = pm.mask;
  const int i = pm.instance;
  const int t0 = pm.frame;
  const Point2 c0 = scene.center(i, t0);
  const double s0 = scene.scale(i, t0);
  std::normal_distribution<double> step(0.0, 2.5);
  for (const Point2& p0 : init_point_grid(pm.mask, spacing)) {
    Trajectory traj;
    traj.coords.resize(static_cast<size_t>(scene.frames));
    traj.visible.resize(static_cast<size_t>(scene.frames));
    const double ux = (p0.x - c0.x) / s0;
    const double uy = (p0.y - c0.y) / s0;
    for (int t = 0; t < scene.frames; ++t) {
      const Point2 c = scene.center(i, t);
      const double s = scene.scale(i, t);
      const Point2 p{c.x + ux * s, c.y + uy * s};
      const bool in_image = p.x >= 0 && p.y >= 0 && p.x < scene.width && p.y < scene.height;
      traj.coords[static_cast<size_t>(t)] = p;
      traj.visible[static_cast<size_t>(t)] = scene.present(i, t) && in_image &&
                                             !scene.in_occluder(p.x) &&
                                             !scene.occluded_by_closer(i, t, p.x, p.y);
    }
    if (pm.drift) {
      // Tracker failure: the point random-walks away from t0 in both directions.
      double ox = 0, oy = 0;
      for (int t = t0 + 1; t < scene.frames; ++t) {
        ox += step(rng);
        oy += step(rng);
        traj.coords[static_cast<size_t>(t)] = {p0.x + ox, p0.y + oy};
      }
      ox = oy = 0;
      for (int t = t0 - 1; t >= 0; --t) {
        ox += step(rng);
        oy += step(rng);
        traj.coords[static_cast<size_t>(t)] = {p0.x + ox, p0.y + oy};
      }
    }
    traj.coords[static_cast<size_t>(t0)] = p0;
    traj.visible[static_cast<size_t>(t0)] = true;
    track.trajectories.push_back(std::move(traj));
  }
  return track;
}

InstanceTrack track_noise_mask(const Scene& scene, const PendingMask& pm, int spacing) {
  InstanceTrack track;
  track.source_frame = pm.frame;
  track.source_mask = pm.mask;
  for (const Point2& p0 : init_point_grid(pm.mask, spacing)) {
    Trajectory traj;
    traj.coords.assign(static_cast<size_t>(scene.frames), p0);
    traj.visible.resize(static_cast<size_t>(scene.frames));
    for (int t = 0; t < scene.frames; ++t) {
      traj.visible[static_cast<size_t>(t)] =
          t >= pm.frame - pm.life_before && t <= pm.frame + pm.life_after;
    }
    track.trajectories.push_back(std::move(traj));
  }
  return track;
}

RleMask noise_blob(const SynthConfig& config, Rng& rng) {
  const double size = std::min(config.height, config.width);
  for (int attempt = 0;; ++attempt) {
    const double rx = uniform(rng, 0.06, 0.12) * size * (1.0 + 0.1 * attempt);
    const double ry = rx * uniform(rng, 0.6, 1.4);
    const double cx = uniform(rng, 0.0, config.width);
    const double cy = uniform(rng, 0.0, config.height);
    Bitmap bits(config.height, config.width);
    for (int r = 0; r < config.height; ++r) {
      for (int c = 0; c < config.width; ++c) {
        const double dx = (c + 0.5 - cx) / rx, dy = (r + 0.5 - cy) / ry;
        if (dx * dx + dy * dy <= 1.0) bits.set(r, c, true);
      }
    }
    if (bits.count() >= config.min_mask_area) return rle_encode(bits);
  }
}

}  // namespace

void validate_config(const SynthConfig& config) {
  if (config.num_frames < 2) throw InputError("synth: num_frames must be >= 2");
  if (config.height < 8 || config.width < 8) throw InputError("synth: image must be at least 8x8");
  if (config.instances.empty()) {
    if (config.min_instances < 1 || config.max_instances < config.min_instances) {
      throw InputError("synth: need 1 <= min_instances <= max_instances");
    }
    if (config.motions.empty()) throw InputError("synth: empty motion pool");
  }
  for (const auto& spec : config.instances) {
    const int end = spec.appear_end < 0 ? config.num_frames - 1 : spec.appear_end;
    if (spec.appear_start < 0 || end >= config.num_frames || spec.appear_start > end) {
      throw InputError("synth: appearance window outside the video");
    }
  }
  auto is_rate = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (config.noise_rate < 0.0 || !is_rate(config.duplicate_rate) ||
      !is_rate(config.miss_rate) || !is_rate(config.drift_rate)) {
    throw InputError("synth: rates must be non-negative probabilities");
  }
  if (!(config.min_radius > 0.0 && config.min_radius <= config.max_radius &&
        config.max_radius < 0.5)) {
    throw InputError("synth: need 0 < min_radius <= max_radius < 0.5");
  }
  if (config.grid_spacing < 1) throw InputError("synth: grid_spacing must be >= 1");
  if (config.jitter < 0 || config.noise_life < 0 || config.min_mask_area < 1 ||
      config.occluder_width < 0 || config.feature_noise < 0.0) {
    throw InputError("synth: negative size parameter");
  }
}

std::string synth_video_id(uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "synth_%06llu", static_cast<unsigned long long>(seed));
  return buf;
}

SyntheticVideo synth_generate(const SynthConfig& config, uint64_t seed) {
  validate_config(config);
  Rng rng(seed);

  Scene scene;
  scene.frames = config.num_frames;
  scene.height = config.height;
  scene.width = config.width;
  scene.min_radius = config.min_radius;
  scene.max_radius = config.max_radius;
  if (!config.instances.empty()) {
    scene.specs = config.instances;
    for (auto& s : scene.specs) {
      if (s.appear_end < 0) s.appear_end = config.num_frames - 1;
    }
  } else {
    const int n = uniform_int(rng, config.min_instances, config.max_instances);
    for (int i = 0; i < n; ++i) scene.specs.push_back(sample_spec(config, rng));
  }
  for (const auto& s : scene.specs) {
    if (s.motion == MotionType::kPartialOcclusion) scene.has_occluder = true;
  }
  if (scene.has_occluder) {
    scene.occluder_begin = (config.width - config.occluder_width) / 2;
    scene.occluder_end = scene.occluder_begin + config.occluder_width;
  }
  for (int i = 0; i < static_cast<int>(scene.specs.size()); ++i) {
    if (!scene.specs[static_cast<size_t>(i)].geometry) place_instance(scene, i, rng);
  }

  SyntheticVideo video;
  video.id = synth_video_id(seed);
  video.seed = seed;
  video.num_frames = config.num_frames;
  video.height = config.height;
  video.width = config.width;
  video.specs = scene.specs;

  const int n_inst = static_cast<int>(scene.specs.size());
  video.features = FeatureVideo(config.num_frames, config.height, config.width, kFeatureChannels);
  video.gt.assign(static_cast<size_t>(n_inst),
                  std::vector<std::optional<RleMask>>(static_cast<size_t>(config.num_frames)));
  std::normal_distribution<float> pixel_noise(0.0f, static_cast<float>(config.feature_noise));
  const float frame_denom = static_cast<float>(std::max(1, config.num_frames - 1));
  for (int t = 0; t < config.num_frames; ++t) {
    std::vector<Bitmap> owned(static_cast<size_t>(n_inst), Bitmap(config.height, config.width));
    for (int r = 0; r < config.height; ++r) {
      for (int c = 0; c < config.width; ++c) {
        const int who = scene.owner(t, r, c);
        float* px = &video.features.at(t, r, c, 0);
        if (who >= 0) {
          owned[static_cast<size_t>(who)].set(r, c, true);
          px[who % kPaletteChannels] = 1.0f;
        } else if (who == kOccluderOwner) {
          px[kClutterChannel] = 1.0f;
        }
        if (config.feature_noise > 0.0) {
          for (int k = 0; k <= kClutterChannel; ++k) px[k] += pixel_noise(rng);
        }
        px[kColChannel] = (c + 0.5f) / static_cast<float>(config.width);
        px[kRowChannel] = (r + 0.5f) / static_cast<float>(config.height);
        px[kFrameChannel] = static_cast<float>(t) / frame_denom;
      }
    }
    for (int i = 0; i < n_inst; ++i) {
      if (owned[static_cast<size_t>(i)].count() >= config.min_mask_area) {
        video.gt[static_cast<size_t>(i)][static_cast<size_t>(t)] =
            rle_encode(owned[static_cast<size_t>(i)]);
      }
    }
  }

  std::vector<PendingMask> pending;
  int n_real = 0;
  for (int i = 0; i < n_inst; ++i) {
    for (int t = 0; t < config.num_frames; ++t) {
      const auto& gt = video.gt[static_cast<size_t>(i)][static_cast<size_t>(t)];
      if (!gt || coin(rng, config.miss_rate)) continue;
      const int copies = 1 + (coin(rng, config.duplicate_rate) ? 1 : 0);
      for (int k = 0; k < copies; ++k) {
        PendingMask pm;
        pm.frame = t;
        pm.instance = i;
        pm.mask = jitter_mask(*gt, config, rng);
        pm.drift = coin(rng, config.drift_rate);
        pending.push_back(std::move(pm));
        ++n_real;
      }
    }
  }
  const auto n_noise = static_cast<int>(std::llround(config.noise_rate * n_real));
  for (int k = 0; k < n_noise; ++k) {
    PendingMask pm;
    pm.frame = uniform_int(rng, 0, config.num_frames - 1);
    pm.mask = noise_blob(config, rng);
    pm.life_before = uniform_int(rng, 0, config.noise_life);
    pm.life_after = uniform_int(rng, 0, config.noise_life);
    pending.push_back(std::move(pm));
  }

  // Order by frame; within a frame the detector order is arbitrary.
  std::stable_sort(pending.begin(), pending.end(),
                   [](const PendingMask& a, const PendingMask& b) { return a.frame < b.frame; });
  for (size_t begin = 0; begin < pending.size();) {
    size_t end = begin;
    while (end < pending.size() && pending[end].frame == pending[begin].frame) ++end;
    std::shuffle(pending.begin() + static_cast<std::ptrdiff_t>(begin),
                 pending.begin() + static_cast<std::ptrdiff_t>(end), rng);
    begin = end;
  }

  for (const auto& pm : pending) {
    InstanceTrack track = pm.instance == kNoiseInstance
                              ? track_noise_mask(scene, pm, config.grid_spacing)
                              : track_real_mask(scene, pm, config.grid_spacing, rng);
    track.source_video = video.id;
    video.tracks.push_back(std::move(track));
    video.assignment.push_back(pm.instance);
  }
  return video;
}

}  // namespace keymask
