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

#include "keymask/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "keymask/errors.hpp"
#include "keymask/hungarian.hpp"

namespace keymask {

void LossWeights::validate() const {
  if (lambda_ce < 0.0 || lambda_dice < 0.0) throw InputError("loss weights must be >= 0");
  if (lambda_ce == 0.0 && lambda_dice == 0.0) throw InputError("loss weights cannot both be 0");
}

Target make_target(const RleMask& mask) {
  Target t;
  t.bits.assign(static_cast<size_t>(mask.height()) * mask.width(), 0);
  const Bitmap bits = rle_decode(mask);
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      t.bits[static_cast<size_t>(r) * mask.width() + c] = bits.at(r, c) ? 1 : 0;
    }
  }
  t.area = mask.area();
  return t;
}

double bce_kernel(std::span<const double> probs, std::span<const uint8_t> target,
                  std::span<double> grad_out, double scale) {
  if (probs.size() != target.size()) throw DimensionError("bce: prediction/target size mismatch");
  const double n = static_cast<double>(probs.size());
  double sum = 0.0;
  const bool want_grad = !grad_out.empty();
  for (size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbEpsilon, 1.0 - kProbEpsilon);
    const double y = target[i];
    sum -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    if (want_grad) grad_out[i] += scale * (p - y) / (p * (1.0 - p)) / n;
  }
  return sum / n;
}

double dice_kernel(std::span<const double> probs, std::span<const uint8_t> target,
                   std::span<double> grad_out, double scale) {
  if (probs.size() != target.size()) throw DimensionError("dice: prediction/target size mismatch");
  double inter = 0.0, psum = 0.0, ysum = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    inter += probs[i] * target[i];
    psum += probs[i];
    ysum += target[i];
  }
  const double num = 2.0 * inter + kDiceSmooth;
  const double den = psum + ysum + kDiceSmooth;
  if (!grad_out.empty()) {
    const double den2 = den * den;
    for (size_t i = 0; i < probs.size(); ++i) {
      grad_out[i] -= scale * (2.0 * target[i] * den - num) / den2;
    }
  }
  return 1.0 - num / den;
}

double mask_kernel(std::span<const double> probs, const Target& target,
                   const LossWeights& weights, std::span<double> grad_out, double scale) {
  double loss = 0.0;
  if (weights.lambda_ce != 0.0) {
    loss += weights.lambda_ce * bce_kernel(probs, target.bits, grad_out, scale * weights.lambda_ce);
  }
  if (weights.lambda_dice != 0.0) {
    loss += weights.lambda_dice *
            dice_kernel(probs, target.bits, grad_out, scale * weights.lambda_dice);
  }
  return loss;
}

namespace {

void check_grid(const ProbGrid& probs, const RleMask& gt) {
  if (probs.height != gt.height() || probs.width != gt.width() ||
      probs.values.size() != static_cast<size_t>(probs.height) * probs.width) {
    throw DimensionError("prediction grid " + std::to_string(probs.height) + "x" +
                         std::to_string(probs.width) + " vs mask " +
                         std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  }
}

}  // namespace

LossGrad bce_loss(const ProbGrid& probs, const RleMask& gt) {
  check_grid(probs, gt);
  LossGrad out;
  out.grad.assign(probs.values.size(), 0.0);
  out.loss = bce_kernel(probs.values, make_target(gt).bits, out.grad, 1.0);
  return out;
}

LossGrad dice_loss(const ProbGrid& probs, const RleMask& gt) {
  check_grid(probs, gt);
  LossGrad out;
  out.grad.assign(probs.values.size(), 0.0);
  out.loss = dice_kernel(probs.values, make_target(gt).bits, out.grad, 1.0);
  return out;
}

LossGrad mask_loss(const ProbGrid& probs, const RleMask& gt, const LossWeights& weights) {
  check_grid(probs, gt);
  weights.validate();
  LossGrad out;
  out.grad.assign(probs.values.size(), 0.0);
  out.loss = mask_kernel(probs.values, make_target(gt), weights, out.grad, 1.0);
  return out;
}

PredVolume::PredVolume(int slots, int frames, int height, int width, double fill)
    : slots_(slots),
      frames_(frames),
      height_(height),
      width_(width),
      values_(static_cast<size_t>(slots) * frames * height * width, fill) {}

namespace {

void check_targets(const PredVolume& preds, std::span<const InstanceTargets> annots) {
  for (const auto& inst : annots) {
    if (static_cast<int>(inst.size()) != preds.frames()) {
      throw DimensionError("annotation has " + std::to_string(inst.size()) +
                           " frames, predictions have " + std::to_string(preds.frames()));
    }
    for (const auto& t : inst) {
      if (t && t->bits.size() != preds.grid_size()) {
        throw DimensionError("annotation grid size differs from predictions");
      }
    }
  }
}

bool annotated(const std::optional<Target>& t) { return t && t->area > 0; }

// DropLoss of instance i against slot slot_of[i], accumulated into grad.
double accumulate_droploss(const PredVolume& preds, std::span<const InstanceTargets> annots,
                           const std::vector<int>& slot_of, const LossWeights& weights,
                           PredVolume& grad) {
  double total = 0.0;
  for (size_t i = 0; i < annots.size(); ++i) {
    const int slot = slot_of[i];
    if (slot == kUnassigned) continue;
    for (int t = 0; t < preds.frames(); ++t) {
      const auto& target = annots[i][static_cast<size_t>(t)];
      if (!annotated(target)) continue;
      total += mask_kernel(preds.grid(slot, t), *target, weights, grad.grid(slot, t), 1.0);
    }
  }
  return total;
}

PredVolume zero_like(const PredVolume& preds) {
  return PredVolume(preds.slots(), preds.frames(), preds.height(), preds.width());
}

}  // namespace

VolumeLoss temporal_droploss(const PredVolume& preds, std::span<const InstanceTargets> annots,
                             const LossWeights& weights) {
  if (static_cast<int>(annots.size()) != preds.slots()) {
    throw DimensionError("droploss: " + std::to_string(annots.size()) + " instances vs " +
                         std::to_string(preds.slots()) + " matched predictions");
  }
  check_targets(preds, annots);
  weights.validate();
  VolumeLoss out;
  out.grad = zero_like(preds);
  std::vector<int> identity(annots.size());
  for (size_t i = 0; i < identity.size(); ++i) identity[i] = static_cast<int>(i);
  out.loss = accumulate_droploss(preds, annots, identity, weights, out.grad);
  return out;
}

std::vector<int> match_annotations(const PredVolume& preds,
                                   std::span<const InstanceTargets> annots,
                                   const LossWeights& weights) {
  check_targets(preds, annots);
  std::vector<int> rows;
  std::vector<std::vector<double>> cost;
  for (size_t i = 0; i < annots.size(); ++i) {
    std::vector<double> row(static_cast<size_t>(preds.slots()), 0.0);
    int count = 0;
    for (int t = 0; t < preds.frames(); ++t) {
      const auto& target = annots[i][static_cast<size_t>(t)];
      if (!annotated(target)) continue;
      ++count;
      for (int q = 0; q < preds.slots(); ++q) {
        row[static_cast<size_t>(q)] += mask_kernel(preds.grid(q, t), *target, weights, {}, 1.0);
      }
    }
    if (count == 0) continue;
    for (double& c : row) c /= count;
    rows.push_back(static_cast<int>(i));
    cost.push_back(std::move(row));
  }
  std::vector<int> out(annots.size(), kUnassigned);
  const std::vector<int> asg = hungarian_match(cost);
  for (size_t r = 0; r < rows.size(); ++r) out[static_cast<size_t>(rows[r])] = asg[r];
  return out;
}

std::vector<int> match_teacher(const PredVolume& preds,
                               std::span<const InstanceTargets> teacher) {
  check_targets(preds, teacher);
  // Thresholded student masks, computed once per slot and frame.
  std::vector<std::vector<uint8_t>> binary(static_cast<size_t>(preds.slots() * preds.frames()));
  for (int q = 0; q < preds.slots(); ++q) {
    for (int t = 0; t < preds.frames(); ++t) {
      auto grid = preds.grid(q, t);
      auto& b = binary[static_cast<size_t>(q * preds.frames() + t)];
      b.resize(grid.size());
      for (size_t k = 0; k < grid.size(); ++k) b[k] = grid[k] > 0.5 ? 1 : 0;
    }
  }
  std::vector<int> rows;
  std::vector<std::vector<double>> cost;
  for (size_t i = 0; i < teacher.size(); ++i) {
    std::vector<double> row(static_cast<size_t>(preds.slots()), 0.0);
    int count = 0;
    for (int t = 0; t < preds.frames(); ++t) {
      const auto& target = teacher[i][static_cast<size_t>(t)];
      if (!annotated(target)) continue;
      ++count;
      for (int q = 0; q < preds.slots(); ++q) {
        const auto& b = binary[static_cast<size_t>(q * preds.frames() + t)];
        int64_t inter = 0, uni = 0;
        for (size_t k = 0; k < b.size(); ++k) {
          inter += b[k] & target->bits[k];
          uni += b[k] | target->bits[k];
        }
        const double iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
        row[static_cast<size_t>(q)] += 1.0 - iou;
      }
    }
    if (count == 0) continue;
    for (double& c : row) c /= count;
    rows.push_back(static_cast<int>(i));
    cost.push_back(std::move(row));
  }
  std::vector<int> out(teacher.size(), kUnassigned);
  const std::vector<int> asg = hungarian_match(cost);
  for (size_t r = 0; r < rows.size(); ++r) out[static_cast<size_t>(rows[r])] = asg[r];
  return out;
}

MatchedLoss sparse_loss(const PredVolume& preds, std::span<const InstanceTargets> annots,
                        const LossWeights& weights) {
  weights.validate();
  MatchedLoss out;
  out.assignment = match_annotations(preds, annots, weights);
  out.grad = zero_like(preds);
  out.loss = accumulate_droploss(preds, annots, out.assignment, weights, out.grad);
  return out;
}

MatchedLoss distill_loss(const PredVolume& preds, std::span<const InstanceTargets> teacher,
                         const LossWeights& weights) {
  weights.validate();
  MatchedLoss out;
  out.assignment = match_teacher(preds, teacher);
  out.grad = zero_like(preds);
  out.loss = accumulate_droploss(preds, teacher, out.assignment, weights, out.grad);
  return out;
}

FullLoss full_loss(const PredVolume& preds, std::span<const InstanceTargets> sparse,
                   std::span<const InstanceTargets> teacher, const LossWeights& weights) {
  MatchedLoss drop = sparse_loss(preds, sparse, weights);
  MatchedLoss dist = distill_loss(preds, teacher, weights);
  FullLoss out;
  out.droploss = drop.loss;
  out.distill = dist.loss;
  out.total = drop.loss + dist.loss;
  out.grad = std::move(drop.grad);
  auto& g = out.grad.values();
  const auto& gd = dist.grad.values();
  for (size_t k = 0; k < g.size(); ++k) g[k] += gd[k];
  out.sparse_assignment = std::move(drop.assignment);
  out.distill_assignment = std::move(dist.assignment);
  return out;
}

ParamVector ema_update(const ParamVector& teacher, const ParamVector& student, double mu) {
  if (teacher.size() != student.size()) {
    throw DimensionError("ema: teacher has " + std::to_string(teacher.size()) +
                         " parameters, student " + std::to_string(student.size()));
  }
  if (!(mu >= 0.0 && mu <= 1.0)) throw InputError("ema: mu must lie in [0, 1]");
  ParamVector out(teacher.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = mu * teacher[i] + (1.0 - mu) * student[i];
  return out;
}

double grad_check(const ScalarFn& fn, std::span<const double> x, double step) {
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> analytic;
  fn(point, analytic);
  std::vector<double> scratch;
  double worst = 0.0;
  for (size_t i = 0; i < point.size(); ++i) {
    const double orig = point[i];
    point[i] = orig + step;
    const double up = fn(point, scratch);
    point[i] = orig - step;
    const double down = fn(point, scratch);
    point[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-8));
  }
  return worst;
}

}  // namespace keymask
