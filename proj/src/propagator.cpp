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

#include "keymask/propagator.hpp"

#include <cmath>
#include <random>
#include <string>

#include "keymask/errors.hpp"

namespace keymask {

ToyPropagator::ToyPropagator(PropagatorShape shape, ParamVector params)
    : shape_(shape), params_(std::move(params)) {
  if (shape_.num_slots < 1 || shape_.feature_dim < 1 || shape_.max_frames < 1) {
    throw DimensionError("propagator dimensions must be positive");
  }
  if (params_.size() != shape_.num_params()) {
    throw DimensionError("propagator expects " + std::to_string(shape_.num_params()) +
                         " parameters, got " + std::to_string(params_.size()));
  }
}

ToyPropagator ToyPropagator::zeros(PropagatorShape shape) {
  return ToyPropagator(shape, ParamVector(shape.num_params(), 0.0));
}

ToyPropagator ToyPropagator::random(PropagatorShape shape, uint64_t seed, double weight_scale,
                                    double bias) {
  ToyPropagator model = zeros(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, weight_scale);
  for (int q = 0; q < shape.num_slots; ++q) {
    for (int c = 0; c < shape.feature_dim; ++c) model.weight(q, c) = normal(rng);
    for (int t = 0; t < shape.max_frames; ++t) model.bias(q, t) = bias;
  }
  return model;
}

namespace {

void check_inputs(const ToyPropagator& model, const FeatureVideo& video,
                  std::span<const int> frames) {
  if (video.channels() != model.shape().feature_dim) {
    throw DimensionError("video has " + std::to_string(video.channels()) +
                         " feature channels, model expects " +
                         std::to_string(model.shape().feature_dim));
  }
  for (int t : frames) {
    if (t < 0 || t >= video.frames() || t >= model.shape().max_frames) {
      throw DimensionError("frame " + std::to_string(t) + " outside video or model range");
    }
  }
}

}  // namespace

PredVolume toy_forward(const ToyPropagator& model, const FeatureVideo& video,
                       std::span<const int> frames) {
  check_inputs(model, video, frames);
  const int slots = model.shape().num_slots;
  const int dim = model.shape().feature_dim;
  const int nf = static_cast<int>(frames.size());
  PredVolume out(slots, nf, video.height(), video.width());
  for (int q = 0; q < slots; ++q) {
    const double* w = &model.params()[static_cast<size_t>(q) * dim];
    for (int f = 0; f < nf; ++f) {
      const int t = frames[static_cast<size_t>(f)];
      const double b = model.bias(q, t);
      auto grid = out.grid(q, f);
      size_t k = 0;
      for (int r = 0; r < video.height(); ++r) {
        for (int c = 0; c < video.width(); ++c, ++k) {
          const float* px = video.pixel(t, r, c);
          double z = b;
          for (int d = 0; d < dim; ++d) z += w[d] * px[d];
          grid[k] = 1.0 / (1.0 + std::exp(-z));
        }
      }
    }
  }
  return out;
}

ParamVector toy_backward(const ToyPropagator& model, const FeatureVideo& video,
                         std::span<const int> frames, const PredVolume& probs,
                         const PredVolume& grad_probs) {
  check_inputs(model, video, frames);
  const int slots = model.shape().num_slots;
  const int dim = model.shape().feature_dim;
  const int nf = static_cast<int>(frames.size());
  if (probs.slots() != slots || probs.frames() != nf || grad_probs.values().size() != probs.values().size()) {
    throw DimensionError("toy_backward: prediction volume does not match the model");
  }
  ParamVector grad(model.params().size(), 0.0);
  for (int q = 0; q < slots; ++q) {
    double* gw = &grad[static_cast<size_t>(q) * dim];
    for (int f = 0; f < nf; ++f) {
      const int t = frames[static_cast<size_t>(f)];
      auto p = probs.grid(q, f);
      auto gp = grad_probs.grid(q, f);
      double gb = 0.0;
      size_t k = 0;
      for (int r = 0; r < video.height(); ++r) {
        for (int c = 0; c < video.width(); ++c, ++k) {
          if (gp[k] == 0.0) continue;
          const double dz = gp[k] * p[k] * (1.0 - p[k]);
          const float* px = video.pixel(t, r, c);
          for (int d = 0; d < dim; ++d) gw[d] += dz * px[d];
          gb += dz;
        }
      }
      grad[model.bias_index(q, t)] += gb;
    }
  }
  return grad;
}

}  // namespace keymask
