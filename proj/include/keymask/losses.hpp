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
#include <optional>
#include <span>
#include <vector>

#include "keymask/mask.hpp"

namespace keymask {

inline constexpr double kProbEpsilon = 1e-7;
inline constexpr double kDiceSmooth = 1.0;

struct LossWeights {
  double lambda_ce = 5.0;
  double lambda_dice = 5.0;

  // Throws InputError for negative weights or both zero.
  void validate() const;
};

// H x W grid of foreground probabilities, row-major.
struct ProbGrid {
  int height = 0;
  int width = 0;
  std::vector<double> values;
};

// Binary target, row-major, with its foreground count cached.
struct Target {
  std::vector<uint8_t> bits;
  int64_t area = 0;
};

Target make_target(const RleMask& mask);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d probability, same layout as input
};

// Mean per-pixel binary cross-entropy with probabilities clamped to
// [eps, 1 - eps]. The gradient uses the clamped value.
LossGrad bce_loss(const ProbGrid& probs, const RleMask& gt);

// 1 - (2 sum(p y) + s) / (sum(p) + sum(y) + s), s = 1.
LossGrad dice_loss(const ProbGrid& probs, const RleMask& gt);

LossGrad mask_loss(const ProbGrid& probs, const RleMask& gt, const LossWeights& weights);

// Span kernels behind the grid API. They add scale * d loss / d p into
// grad_out (which may be empty to skip the gradient) and return the loss.
double bce_kernel(std::span<const double> probs, std::span<const uint8_t> target,
                  std::span<double> grad_out, double scale);
double dice_kernel(std::span<const double> probs, std::span<const uint8_t> target,
                   std::span<double> grad_out, double scale);
double mask_kernel(std::span<const double> probs, const Target& target,
                   const LossWeights& weights, std::span<double> grad_out, double scale);

// Probabilities for slots x frames of H x W grids, laid out
// [slot][frame][row][col].
class PredVolume {
 public:
  PredVolume() = default;
  PredVolume(int slots, int frames, int height, int width, double fill = 0.0);

  int slots() const { return slots_; }
  int frames() const { return frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  size_t grid_size() const { return static_cast<size_t>(height_) * width_; }

  std::span<double> grid(int slot, int frame) {
    return {values_.data() + offset(slot, frame), grid_size()};
  }
  std::span<const double> grid(int slot, int frame) const {
    return {values_.data() + offset(slot, frame), grid_size()};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  size_t offset(int slot, int frame) const {
    return (static_cast<size_t>(slot) * frames_ + frame) * grid_size();
  }

  int slots_ = 0;
  int frames_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

// Per-frame targets of one instance; nullopt where unannotated.
using InstanceTargets = std::vector<std::optional<Target>>;

struct VolumeLoss {
  double loss = 0.0;
  PredVolume grad;
};

// Sum over instances i and frames t of 1(|m_i^t| > 0) * mask_loss. Slot i of
// `preds` is the prediction matched to instance i. Unannotated and empty
// frames contribute neither loss nor gradient. Throws DimensionError when
// the instance or frame counts disagree.
VolumeLoss temporal_droploss(const PredVolume& preds, std::span<const InstanceTargets> annots,
                             const LossWeights& weights);

// Hungarian matching of annotated instances to prediction slots with cost
// = mean over annotated frames of the mask loss. Instances with no
// annotated frame stay unassigned.
std::vector<int> match_annotations(const PredVolume& preds,
                                   std::span<const InstanceTargets> annots,
                                   const LossWeights& weights);

// Hungarian matching of dense teacher instances to slots with cost = mean
// per-frame (1 - IoU) of the student prediction thresholded at 0.5.
std::vector<int> match_teacher(const PredVolume& preds,
                               std::span<const InstanceTargets> teacher);

struct MatchedLoss {
  double loss = 0.0;
  PredVolume grad;
  std::vector<int> assignment;  // instance -> slot
};

// Temporal DropLoss after matching annotations to slots.
MatchedLoss sparse_loss(const PredVolume& preds, std::span<const InstanceTargets> annots,
                        const LossWeights& weights);

// Mask loss against the teacher's dense pseudo-labels after matching.
MatchedLoss distill_loss(const PredVolume& preds, std::span<const InstanceTargets> teacher,
                         const LossWeights& weights);

struct FullLoss {
  double droploss = 0.0;
  double distill = 0.0;
  double total = 0.0;
  PredVolume grad;
  std::vector<int> sparse_assignment;
  std::vector<int> distill_assignment;
};

FullLoss full_loss(const PredVolume& preds, std::span<const InstanceTargets> sparse,
                   std::span<const InstanceTargets> teacher, const LossWeights& weights);

using ParamVector = std::vector<double>;

inline constexpr double kDefaultEmaRate = 0.999;

// mu * teacher + (1 - mu) * student. Throws DimensionError / InputError.
ParamVector ema_update(const ParamVector& teacher, const ParamVector& student, double mu);

// Differentiable scalar function: returns f(x) and writes df/dx into grad.
using ScalarFn = std::function<double(std::span<const double> x, std::vector<double>& grad)>;

// Max over coordinates of |analytic - central difference| /
// (|central difference| + 1e-8).
double grad_check(const ScalarFn& fn, std::span<const double> x, double step);

}  // namespace keymask
