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
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "keymask/labelset.hpp"
#include "keymask/losses.hpp"
#include "keymask/propagator.hpp"
#include "keymask/synth.hpp"

namespace keymask {

inline constexpr int kDefaultSnippetLength = 2;

struct TrainConfig {
  double learning_rate = 0.1;
  int steps = 2000;
  int batch_size = 4;
  double mu = kDefaultEmaRate;
  LossWeights weights;
  uint64_t seed = 0;
  int snippet_len = kDefaultSnippetLength;
  // The distillation term is switched on after this many steps.
  int distill_warmup_steps = 0;
  bool use_distillation = true;
  int num_slots = 4;
  // Teacher probabilities above this become pseudo-label foreground.
  double threshold = 0.5;
  // Per-frame masks smaller than this are emptied; slots left empty are dropped.
  int area_floor = 10;
  double init_weight_scale = 0.01;
  double init_bias = -2.0;

  // Throws InputError.
  void validate() const;
};

// Feature videos by id. Pointers are non-owning.
using FeatureIndex = std::map<std::string, const FeatureVideo*>;

struct Snippet {
  std::string video_id;
  std::vector<int> frames;
  const FeatureVideo* features = nullptr;
  // Per instance (labelset order), per snippet frame.
  std::vector<InstanceTargets> annotations;
};

// Anchor frames t where some instance is annotated on all of t..t+len-1.
std::vector<int> pseudo_dense_anchors(const VideoLabels& labels, int snippet_len);

// Picks an anchor uniformly among pseudo-dense anchors, or uniformly over
// 0..T-len when there are none. Throws InputError if T < len.
int sample_anchor(const VideoLabels& labels, int snippet_len, std::mt19937_64& rng);

Snippet sample_pseudo_dense_snippet(const VideoLabels& labels, const FeatureVideo& features,
                                    int snippet_len, std::mt19937_64& rng);

struct StepLog {
  int step = 0;
  double droploss = 0.0;
  double distill_loss = 0.0;
  double total = 0.0;
};

struct TrainResult {
  ToyPropagator teacher;
  ToyPropagator student;
  std::vector<StepLog> log;
};

// Called after every step; may be empty.
using StepCallback = std::function<void(const StepLog&)>;

// Student-teacher training on an anchoring labelset: each step samples
// snippets, matches and scores the student against the anchors (DropLoss)
// and against the thresholded EMA-teacher predictions, takes a gradient step
// and updates the teacher. Throws InputError when no video is usable and
// DivergenceError on a non-finite loss.
TrainResult train_distillation(const Labelset& anchors, const FeatureIndex& videos,
                               const TrainConfig& config, const StepCallback& on_step = {});

// Stage 1: anchors are sparse keymasks.
TrainResult train_stage1(const Labelset& sparse, const FeatureIndex& videos,
                         const TrainConfig& config, const StepCallback& on_step = {});

// Stage 2: a freshly initialised student anchored on stage-1 dense labels.
// Throws InputError unless `dense` is non-empty and satisfies the density
// invariant.
TrainResult train_stage2(const Labelset& dense, const FeatureIndex& videos,
                         const TrainConfig& config, const StepCallback& on_step = {});

// Teacher pseudo-labels for one snippet: slots thresholded at `threshold`,
// per-frame masks under `area_floor` pixels emptied, empty slots dropped.
std::vector<InstanceTargets> teacher_targets(const PredVolume& teacher_probs, double threshold,
                                             int area_floor);

// Dense labelset from a trained model: every video is predicted on all
// frames, thresholded, and each kept slot becomes one instance spanning its
// first to last non-empty frame.
Labelset densify(const ToyPropagator& teacher, const FeatureIndex& videos, double threshold = 0.5,
                 int area_floor = 10);

// Mean per-frame IoU of the model's thresholded slots against ground truth
// over frames where the instance is visible and `annotated` has no mask for
// it. Slots are paired with ground-truth instances per video by minimum-cost
// assignment on 1 - st_iou over all frames; an unpaired instance scores
// zero. Instances of `annotated` are looked up by id. Throws InputError when
// no frame qualifies.
double heldout_iou(const ToyPropagator& model, const FeatureIndex& videos, const Labelset& gt,
                   const Labelset& annotated, double threshold = 0.5);

}  // namespace keymask
