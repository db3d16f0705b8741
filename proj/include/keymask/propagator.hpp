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
#include <span>

#include "keymask/losses.hpp"
#include "keymask/synth.hpp"

namespace keymask {

struct PropagatorShape {
  int num_slots = 4;
  int feature_dim = kFeatureChannels;
  int max_frames = 20;

  size_t num_params() const {
    return static_cast<size_t>(num_slots) * (feature_dim + max_frames);
  }
  friend bool operator==(const PropagatorShape&, const PropagatorShape&) = default;
};

// Per-slot linear pixel scorer:
//   p[q, t, y, x] = sigmoid(<w_q, feature(t, y, x)> + b[q, t]).
// Parameters are stored flat: all slot weight vectors, then the per-slot
// per-frame biases.
class ToyPropagator {
 public:
  ToyPropagator() = default;
  // Throws DimensionError if params.size() != shape.num_params().
  ToyPropagator(PropagatorShape shape, ParamVector params);

  static ToyPropagator zeros(PropagatorShape shape);
  // Weights ~ N(0, weight_scale^2), biases = bias.
  static ToyPropagator random(PropagatorShape shape, uint64_t seed, double weight_scale,
                              double bias);

  const PropagatorShape& shape() const { return shape_; }
  const ParamVector& params() const { return params_; }
  ParamVector& params() { return params_; }

  double weight(int slot, int channel) const {
    return params_[static_cast<size_t>(slot) * shape_.feature_dim + channel];
  }
  double& weight(int slot, int channel) {
    return params_[static_cast<size_t>(slot) * shape_.feature_dim + channel];
  }
  double bias(int slot, int frame) const { return params_[bias_index(slot, frame)]; }
  double& bias(int slot, int frame) { return params_[bias_index(slot, frame)]; }

  size_t bias_index(int slot, int frame) const {
    return static_cast<size_t>(shape_.num_slots) * shape_.feature_dim +
           static_cast<size_t>(slot) * shape_.max_frames + frame;
  }

  friend bool operator==(const ToyPropagator&, const ToyPropagator&) = default;

 private:
  PropagatorShape shape_;
  ParamVector params_;
};

// Probabilities for every slot on the listed frames of `video`. Throws
// DimensionError if the feature depth differs from the model or a frame is
// outside the model's bias table or the video.
PredVolume toy_forward(const ToyPropagator& model, const FeatureVideo& video,
                       std::span<const int> frames);

// Gradient of a loss w.r.t. the parameters, given the forward output and
// d loss / d probability.
ParamVector toy_backward(const ToyPropagator& model, const FeatureVideo& video,
                         std::span<const int> frames, const PredVolume& probs,
                         const PredVolume& grad_probs);

}  // namespace keymask
