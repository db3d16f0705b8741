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

#include "keymask/training.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>

#include "keymask/errors.hpp"
#include "keymask/hungarian.hpp"
#include "keymask/metrics.hpp"

namespace keymask {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InputError("train: learning_rate must be > 0");
  if (steps < 1) throw InputError("train: steps must be >= 1");
  if (batch_size < 1) throw InputError("train: batch_size must be >= 1");
  if (!(mu >= 0.0 && mu <= 1.0)) throw InputError("train: mu must lie in [0, 1]");
  if (snippet_len < 1) throw InputError("train: snippet_len must be >= 1");
  if (num_slots < 1) throw InputError("train: num_slots must be >= 1");
  if (distill_warmup_steps < 0) throw InputError("train: distill_warmup_steps must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InputError("train: threshold must lie in (0, 1)");
  if (area_floor < 0) throw InputError("train: area_floor must be >= 0");
  weights.validate();
}

namespace {

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

bool has_mask(const InstanceLabels& inst, int t) {
  auto it = inst.masks.find(t);
  return it != inst.masks.end() && !it->second.is_empty();
}

// Cached dense targets of one labelled video.
struct TrainVideo {
  std::string id;
  const FeatureVideo* features = nullptr;
  std::vector<InstanceTargets> targets;  // [instance][frame]
  std::vector<int> anchors;
};

std::vector<TrainVideo> prepare_videos(const Labelset& labels, const FeatureIndex& videos,
                                       int snippet_len) {
  std::vector<TrainVideo> out;
  for (const auto& v : labels.videos) {
    if (v.discarded) continue;
    bool any = false;
    for (const auto& inst : v.instances) {
      for (const auto& [t, m] : inst.masks) any = any || !m.is_empty();
    }
    if (!any) continue;
    auto it = videos.find(v.id);
    if (it == videos.end()) throw InputError("no features for video '" + v.id + "'");
    const FeatureVideo& fv = *it->second;
    if (fv.frames() != v.num_frames) {
      throw InputError("video '" + v.id + "': labels have T=" + std::to_string(v.num_frames) +
                       ", features have " + std::to_string(fv.frames()));
    }
    if (fv.frames() < snippet_len) continue;
    TrainVideo tv;
    tv.id = v.id;
    tv.features = &fv;
    for (const auto& inst : v.instances) {
      InstanceTargets per_frame(static_cast<size_t>(fv.frames()));
      for (const auto& [t, m] : inst.masks) {
        if (t < 0 || t >= fv.frames()) {
          throw InputError("video '" + v.id + "': annotation at frame " + std::to_string(t) +
                           " outside the video");
        }
        if (m.height() != fv.height() || m.width() != fv.width()) {
          throw InputError("video '" + v.id + "': mask size differs from feature frames");
        }
        per_frame[static_cast<size_t>(t)] = make_target(m);
      }
      tv.targets.push_back(std::move(per_frame));
    }
    tv.anchors = pseudo_dense_anchors(v, snippet_len);
    out.push_back(std::move(tv));
  }
  return out;
}

int pick(std::mt19937_64& rng, int n) {
  return std::uniform_int_distribution<int>(0, n - 1)(rng);
}

int anchor_from(const std::vector<int>& anchors, int num_frames, int snippet_len,
                std::mt19937_64& rng) {
  if (!anchors.empty()) return anchors[static_cast<size_t>(pick(rng, static_cast<int>(anchors.size())))];
  return pick(rng, num_frames - snippet_len + 1);
}

std::vector<int> snippet_frames(int anchor, int snippet_len) {
  std::vector<int> frames(static_cast<size_t>(snippet_len));
  for (int k = 0; k < snippet_len; ++k) frames[static_cast<size_t>(k)] = anchor + k;
  return frames;
}

std::vector<InstanceTargets> slice_targets(const std::vector<InstanceTargets>& targets,
                                           const std::vector<int>& frames) {
  std::vector<InstanceTargets> out;
  out.reserve(targets.size());
  for (const auto& inst : targets) {
    InstanceTargets s;
    s.reserve(frames.size());
    for (int t : frames) s.push_back(inst[static_cast<size_t>(t)]);
    out.push_back(std::move(s));
  }
  return out;
}

void add_scaled(ParamVector& acc, const ParamVector& g, double scale) {
  for (size_t i = 0; i < acc.size(); ++i) acc[i] += scale * g[i];
}

// Thresholded slots with their slot index. Frames below the floor are emptied.
std::vector<std::pair<int, InstanceTargets>> threshold_slots(const PredVolume& probs,
                                                             double threshold, int area_floor) {
  std::vector<std::pair<int, InstanceTargets>> out;
  for (int q = 0; q < probs.slots(); ++q) {
    InstanceTargets per_frame(static_cast<size_t>(probs.frames()));
    bool kept = false;
    for (int f = 0; f < probs.frames(); ++f) {
      auto grid = probs.grid(q, f);
      Target target;
      target.bits.resize(grid.size());
      for (size_t k = 0; k < grid.size(); ++k) {
        target.bits[k] = grid[k] > threshold ? 1 : 0;
        target.area += target.bits[k];
      }
      if (target.area < area_floor) {
        std::fill(target.bits.begin(), target.bits.end(), uint8_t{0});
        target.area = 0;
      }
      kept = kept || target.area > 0;
      per_frame[static_cast<size_t>(f)] = std::move(target);
    }
    if (kept) out.emplace_back(q, std::move(per_frame));
  }
  return out;
}

}  // namespace

std::vector<int> pseudo_dense_anchors(const VideoLabels& labels, int snippet_len) {
  std::vector<int> anchors;
  for (int t = 0; t + snippet_len <= labels.num_frames; ++t) {
    for (const auto& inst : labels.instances) {
      bool dense = true;
      for (int k = 0; k < snippet_len && dense; ++k) dense = has_mask(inst, t + k);
      if (dense) {
        anchors.push_back(t);
        break;
      }
    }
  }
  return anchors;
}

int sample_anchor(const VideoLabels& labels, int snippet_len, std::mt19937_64& rng) {
  if (snippet_len < 1 || labels.num_frames < snippet_len) {
    throw InputError("video '" + labels.id + "' is shorter than the snippet length");
  }
  return anchor_from(pseudo_dense_anchors(labels, snippet_len), labels.num_frames, snippet_len,
                     rng);
}

Snippet sample_pseudo_dense_snippet(const VideoLabels& labels, const FeatureVideo& features,
                                    int snippet_len, std::mt19937_64& rng) {
  const int anchor = sample_anchor(labels, snippet_len, rng);
  Snippet s;
  s.video_id = labels.id;
  s.features = &features;
  s.frames = snippet_frames(anchor, snippet_len);
  for (const auto& inst : labels.instances) {
    InstanceTargets per_frame;
    for (int t : s.frames) {
      auto it = inst.masks.find(t);
      if (it == inst.masks.end()) {
        per_frame.emplace_back();
      } else {
        per_frame.emplace_back(make_target(it->second));
      }
    }
    s.annotations.push_back(std::move(per_frame));
  }
  return s;
}

std::vector<InstanceTargets> teacher_targets(const PredVolume& teacher_probs, double threshold,
                                             int area_floor) {
  std::vector<InstanceTargets> out;
  for (auto& [slot, targets] : threshold_slots(teacher_probs, threshold, area_floor)) {
    out.push_back(std::move(targets));
  }
  return out;
}

TrainResult train_distillation(const Labelset& anchors, const FeatureIndex& videos,
                               const TrainConfig& config, const StepCallback& on_step) {
  config.validate();
  const std::vector<TrainVideo> data = prepare_videos(anchors, videos, config.snippet_len);
  if (data.empty()) throw InputError("training labelset has no usable annotated video");

  PropagatorShape shape;
  shape.num_slots = config.num_slots;
  shape.feature_dim = data.front().features->channels();
  shape.max_frames = 0;
  for (const auto& [id, fv] : videos) shape.max_frames = std::max(shape.max_frames, fv->frames());

  TrainResult result;
  result.student = ToyPropagator::random(shape, config.seed, config.init_weight_scale, config.init_bias);
  result.teacher = result.student;
  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ull);

  ParamVector grad(shape.num_params());
  for (int step = 0; step < config.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    StepLog entry;
    entry.step = step;
    const bool distill = config.use_distillation && step >= config.distill_warmup_steps;
    const double inv_batch = 1.0 / config.batch_size;
    for (int b = 0; b < config.batch_size; ++b) {
      const TrainVideo& video = data[static_cast<size_t>(pick(rng, static_cast<int>(data.size())))];
      const int anchor = anchor_from(video.anchors, video.features->frames(), config.snippet_len, rng);
      const std::vector<int> frames = snippet_frames(anchor, config.snippet_len);

      const PredVolume preds = toy_forward(result.student, *video.features, frames);
      if (!all_finite(preds.values())) throw DivergenceError(step, "non-finite student output");
      const std::vector<InstanceTargets> sparse = slice_targets(video.targets, frames);
      std::vector<InstanceTargets> teacher;
      if (distill) {
        const PredVolume teacher_probs = toy_forward(result.teacher, *video.features, frames);
        if (!all_finite(teacher_probs.values())) {
          throw DivergenceError(step, "non-finite teacher output");
        }
        teacher = teacher_targets(teacher_probs, config.threshold, config.area_floor);
      }
      const FullLoss loss = full_loss(preds, sparse, teacher, config.weights);
      add_scaled(grad, toy_backward(result.student, *video.features, frames, preds, loss.grad),
                 inv_batch);
      entry.droploss += loss.droploss * inv_batch;
      entry.distill_loss += loss.distill * inv_batch;
      entry.total += loss.total * inv_batch;
    }
    if (!std::isfinite(entry.total)) throw DivergenceError(step, "non-finite training loss");
    if (!all_finite(grad)) throw DivergenceError(step, "non-finite gradient");
    add_scaled(result.student.params(), grad, -config.learning_rate);
    result.teacher.params() = ema_update(result.teacher.params(), result.student.params(), config.mu);
    result.log.push_back(entry);
    if (on_step) on_step(entry);
  }
  return result;
}

TrainResult train_stage1(const Labelset& sparse, const FeatureIndex& videos,
                         const TrainConfig& config, const StepCallback& on_step) {
  if (sparse.videos.empty()) throw InputError("stage 1 needs a non-empty labelset");
  return train_distillation(sparse, videos, config, on_step);
}

TrainResult train_stage2(const Labelset& dense, const FeatureIndex& videos,
                         const TrainConfig& config, const StepCallback& on_step) {
  if (dense.videos.empty()) throw InputError("stage 2 needs a non-empty dense labelset");
  if (!is_dense(dense)) {
    throw InputError("stage 2 labels are not dense: some instance has gaps between frames");
  }
  return train_distillation(dense, videos, config, on_step);
}

Labelset densify(const ToyPropagator& teacher, const FeatureIndex& videos, double threshold,
                 int area_floor) {
  Labelset out;
  out.kind = LabelsetKind::kDense;
  for (const auto& [id, fv] : videos) {
    std::vector<int> frames(static_cast<size_t>(fv->frames()));
    for (int t = 0; t < fv->frames(); ++t) frames[static_cast<size_t>(t)] = t;
    const PredVolume probs = toy_forward(teacher, *fv, frames);
    VideoLabels video;
    video.id = id;
    video.num_frames = fv->frames();
    for (const auto& [slot, per_frame] : threshold_slots(probs, threshold, area_floor)) {
      int first = -1, last = -1;
      for (int t = 0; t < fv->frames(); ++t) {
        if (per_frame[static_cast<size_t>(t)]->area > 0) {
          if (first < 0) first = t;
          last = t;
        }
      }
      InstanceLabels inst;
      inst.id = static_cast<int>(video.instances.size());
      double prob_sum = 0.0;
      int64_t count = 0;
      for (int t = first; t <= last; ++t) {
        const Target& target = *per_frame[static_cast<size_t>(t)];
        auto grid = probs.grid(slot, t);
        Bitmap bits(fv->height(), fv->width());
        for (int r = 0; r < fv->height(); ++r) {
          for (int c = 0; c < fv->width(); ++c) {
            const size_t k = static_cast<size_t>(r) * fv->width() + c;
            if (!target.bits[k]) continue;
            bits.set(r, c, true);
            prob_sum += grid[k];
            ++count;
          }
        }
        inst.masks.emplace(t, rle_encode(bits));
      }
      inst.score = count > 0 ? prob_sum / static_cast<double>(count) : 0.0;
      video.instances.push_back(std::move(inst));
    }
    video.discarded = video.instances.empty();
    out.videos.push_back(std::move(video));
  }
  return out;
}

double heldout_iou(const ToyPropagator& model, const FeatureIndex& videos, const Labelset& gt,
                   const Labelset& annotated, double threshold) {
  double sum = 0.0;
  int64_t count = 0;
  for (const VideoLabels& gv : gt.videos) {
    if (gv.instances.empty()) continue;
    auto it = videos.find(gv.id);
    if (it == videos.end()) throw InputError("no features for video '" + gv.id + "'");
    const FeatureVideo& fv = *it->second;
    std::vector<int> frames(static_cast<size_t>(fv.frames()));
    for (int t = 0; t < fv.frames(); ++t) frames[static_cast<size_t>(t)] = t;
    const PredVolume probs = toy_forward(model, fv, frames);

    std::vector<MaskTrack> slots;
    for (int q = 0; q < probs.slots(); ++q) {
      MaskTrack track;
      for (int t = 0; t < fv.frames(); ++t) {
        auto grid = probs.grid(q, t);
        Bitmap bits(fv.height(), fv.width());
        for (int r = 0; r < fv.height(); ++r) {
          for (int c = 0; c < fv.width(); ++c) {
            bits.set(r, c, grid[static_cast<size_t>(r) * fv.width() + c] > threshold);
          }
        }
        track.emplace_back(rle_encode(bits));
      }
      slots.push_back(std::move(track));
    }
    std::vector<MaskTrack> truth;
    std::vector<std::vector<double>> cost;
    for (const auto& inst : gv.instances) {
      truth.push_back(to_track(inst, gv.num_frames));
      std::vector<double> row;
      for (const auto& slot : slots) row.push_back(1.0 - st_iou(slot, truth.back()));
      cost.push_back(std::move(row));
    }
    const std::vector<int> pairing = hungarian_match(cost);
    const VideoLabels* av = annotated.find(gv.id);
    for (size_t i = 0; i < gv.instances.size(); ++i) {
      const InstanceLabels* ai = nullptr;
      if (av != nullptr) {
        for (const auto& inst : av->instances) {
          if (inst.id == gv.instances[i].id) ai = &inst;
        }
      }
      for (int t = 0; t < gv.num_frames; ++t) {
        const auto& g = truth[i][static_cast<size_t>(t)];
        if (!g || g->is_empty()) continue;
        if (ai != nullptr && ai->masks.count(t) > 0) continue;
        if (pairing[i] != kUnassigned) {
          sum += mask_iou(*slots[static_cast<size_t>(pairing[i])][static_cast<size_t>(t)], *g);
        }
        ++count;
      }
    }
  }
  if (count == 0) throw InputError("heldout_iou: no held-out ground-truth frame");
  return sum / static_cast<double>(count);
}

}  // namespace keymask
