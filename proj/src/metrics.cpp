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

#include "keymask/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "keymask/errors.hpp"
#include "keymask/hungarian.hpp"

namespace keymask {

MaskTrack to_track(const InstanceLabels& instance, int num_frames) {
  MaskTrack track(static_cast<size_t>(num_frames));
  for (const auto& [t, m] : instance.masks) {
    if (t < 0 || t >= num_frames) throw DimensionError("mask frame outside the video");
    track[static_cast<size_t>(t)] = m;
  }
  return track;
}

namespace {

int64_t area_of(const std::optional<RleMask>& m) { return m ? m->area() : 0; }

int64_t inter_of(const std::optional<RleMask>& a, const std::optional<RleMask>& b) {
  if (!a || !b) return 0;
  return intersection_area(*a, *b);
}

}  // namespace

double st_iou(const MaskTrack& a, const MaskTrack& b) {
  if (a.size() != b.size()) throw DimensionError("st_iou: tracks differ in length");
  int64_t inter = 0, uni = 0;
  for (size_t t = 0; t < a.size(); ++t) {
    const int64_t i = inter_of(a[t], b[t]);
    inter += i;
    uni += area_of(a[t]) + area_of(b[t]) - i;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> default_ap_thresholds() {
  std::vector<double> out;
  for (int k = 0; k < 10; ++k) out.push_back(0.5 + 0.05 * k);
  return out;
}

ApResult video_ap(const Labelset& preds, const Labelset& gts,
                  const std::vector<double>& thresholds) {
  for (double thr : thresholds) {
    if (!(thr > 0.0 && thr < 1.0)) throw InputError("AP thresholds must lie in (0, 1)");
  }
  struct Entry {
    double score;
    size_t video;
    size_t pred;
  };
  std::vector<Entry> entries;
  std::vector<std::vector<std::vector<double>>> ious;  // [video][pred][gt]
  int64_t num_gt = 0;
  for (size_t v = 0; v < gts.videos.size(); ++v) {
    const VideoLabels& gv = gts.videos[v];
    num_gt += static_cast<int64_t>(gv.instances.size());
    std::vector<MaskTrack> gt_tracks;
    for (const auto& inst : gv.instances) gt_tracks.push_back(to_track(inst, gv.num_frames));
    std::vector<std::vector<double>> table;
    if (const VideoLabels* pv = preds.find(gv.id)) {
      if (pv->num_frames != gv.num_frames) {
        throw DimensionError("video '" + gv.id + "': prediction and ground truth lengths differ");
      }
      for (size_t p = 0; p < pv->instances.size(); ++p) {
        const InstanceLabels& inst = pv->instances[p];
        if (!std::isfinite(inst.score)) throw InputError("prediction score is not finite");
        const MaskTrack track = to_track(inst, pv->num_frames);
        std::vector<double> row;
        for (const auto& g : gt_tracks) row.push_back(st_iou(track, g));
        table.push_back(std::move(row));
        entries.push_back({inst.score, v, p});
      }
    }
    ious.push_back(std::move(table));
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.score > b.score; });

  ApResult result;
  result.thresholds = thresholds;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  result.ap50 = nan;
  result.ap75 = nan;
  for (double thr : thresholds) {
    double ap = 0.0;
    if (num_gt == 0) {
      ap = entries.empty() ? 1.0 : 0.0;
    } else {
      std::vector<std::vector<bool>> taken(gts.videos.size());
      for (size_t v = 0; v < gts.videos.size(); ++v) taken[v].assign(gts.videos[v].instances.size(), false);
      std::vector<double> precision, recall;
      int64_t tp = 0;
      for (size_t k = 0; k < entries.size(); ++k) {
        const Entry& e = entries[k];
        const std::vector<double>& row = ious[e.video][e.pred];
        int best = -1;
        double best_iou = thr;
        for (size_t g = 0; g < row.size(); ++g) {
          if (taken[e.video][g] || row[g] < best_iou) continue;
          if (best < 0 || row[g] > best_iou) {
            best = static_cast<int>(g);
            best_iou = row[g];
          }
        }
        if (best >= 0) {
          taken[e.video][static_cast<size_t>(best)] = true;
          ++tp;
        }
        precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
      }
      for (size_t i = precision.size(); i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
      }
      for (int r = 0; r <= 100; ++r) {
        const double level = r / 100.0 - 1e-12;
        auto it = std::lower_bound(recall.begin(), recall.end(), level);
        if (it != recall.end()) ap += precision[static_cast<size_t>(it - recall.begin())];
      }
      ap /= 101.0;
    }
    result.per_threshold.push_back(ap);
    if (std::abs(thr - 0.5) < 1e-9) result.ap50 = ap;
    if (std::abs(thr - 0.75) < 1e-9) result.ap75 = ap;
  }
  double sum = 0.0;
  for (double ap : result.per_threshold) sum += ap;
  result.ap = result.per_threshold.empty() ? nan : sum / static_cast<double>(result.per_threshold.size());
  return result;
}

std::vector<std::pair<int, int>> boundary_pixels(const Bitmap& mask) {
  std::vector<std::pair<int, int>> out;
  static const int kDr[4] = {-1, 1, 0, 0};
  static const int kDc[4] = {0, 0, -1, 1};
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      for (int k = 0; k < 4; ++k) {
        const int rr = r + kDr[k], cc = c + kDc[k];
        if (!mask.in_bounds(rr, cc) || !mask.at(rr, cc)) {
          out.emplace_back(r, c);
          break;
        }
      }
    }
  }
  return out;
}

double boundary_f(const RleMask& pred, const RleMask& gt, double tol) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw DimensionError("boundary_f: mask sizes differ");
  }
  const auto pb = boundary_pixels(rle_decode(pred));
  const auto gb = boundary_pixels(rle_decode(gt));
  if (pb.empty() && gb.empty()) return 1.0;
  if (pb.empty() || gb.empty()) return 0.0;

  const int h = gt.height(), w = gt.width();
  std::vector<int> gt_index(static_cast<size_t>(h) * w, -1);
  for (size_t j = 0; j < gb.size(); ++j) {
    gt_index[static_cast<size_t>(gb[j].first) * w + gb[j].second] = static_cast<int>(j);
  }
  const int reach = static_cast<int>(std::floor(tol));
  std::vector<std::vector<int>> adj(pb.size());
  for (size_t i = 0; i < pb.size(); ++i) {
    const auto [r, c] = pb[i];
    for (int dr = -reach; dr <= reach; ++dr) {
      for (int dc = -reach; dc <= reach; ++dc) {
        if (dr * dr + dc * dc > tol * tol) continue;
        const int rr = r + dr, cc = c + dc;
        if (rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
        const int j = gt_index[static_cast<size_t>(rr) * w + cc];
        if (j >= 0) adj[i].push_back(j);
      }
    }
  }

  // Maximum bipartite matching by augmenting paths.
  std::vector<int> match_gt(gb.size(), -1);
  std::vector<int> seen(gb.size(), -1);
  std::function<bool(int, int)> augment = [&](int i, int stamp) {
    for (int j : adj[static_cast<size_t>(i)]) {
      if (seen[static_cast<size_t>(j)] == stamp) continue;
      seen[static_cast<size_t>(j)] = stamp;
      if (match_gt[static_cast<size_t>(j)] < 0 || augment(match_gt[static_cast<size_t>(j)], stamp)) {
        match_gt[static_cast<size_t>(j)] = i;
        return true;
      }
    }
    return false;
  };
  int matched = 0;
  for (size_t i = 0; i < pb.size(); ++i) {
    if (augment(static_cast<int>(i), static_cast<int>(i))) ++matched;
  }
  const double precision = static_cast<double>(matched) / static_cast<double>(pb.size());
  const double recall = static_cast<double>(matched) / static_cast<double>(gb.size());
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

int default_boundary_tolerance(int height, int width) {
  const double diag = std::hypot(static_cast<double>(height), static_cast<double>(width));
  return static_cast<int>(std::ceil(0.008 * diag));
}

JfResult j_and_f(const MaskTrack& pred, const MaskTrack& gt, double tol) {
  if (pred.size() != gt.size()) throw DimensionError("j_and_f: tracks differ in length");
  double j_sum = 0.0, f_sum = 0.0;
  int frames = 0;
  for (size_t t = 0; t < gt.size(); ++t) {
    const int64_t pa = area_of(pred[t]), ga = area_of(gt[t]);
    if (pa == 0 && ga == 0) continue;
    const RleMask& ref = pa > 0 ? *pred[t] : *gt[t];
    const RleMask p = pred[t] ? *pred[t] : RleMask::empty(ref.height(), ref.width());
    const RleMask g = gt[t] ? *gt[t] : RleMask::empty(ref.height(), ref.width());
    const double frame_tol = tol < 0.0 ? default_boundary_tolerance(ref.height(), ref.width()) : tol;
    j_sum += mask_iou(p, g);
    f_sum += boundary_f(p, g, frame_tol);
    ++frames;
  }
  JfResult r;
  r.j = frames == 0 ? 1.0 : j_sum / frames;
  r.f = frames == 0 ? 1.0 : f_sum / frames;
  r.jf = 0.5 * (r.j + r.f);
  return r;
}

JfResult dataset_j_and_f(const Labelset& preds, const Labelset& gts, double tol) {
  double j_sum = 0.0, f_sum = 0.0;
  int64_t count = 0;
  for (const VideoLabels& gv : gts.videos) {
    if (gv.instances.empty()) continue;
    count += static_cast<int64_t>(gv.instances.size());
    const VideoLabels* pv = preds.find(gv.id);
    if (pv == nullptr || pv->instances.empty()) continue;
    if (pv->num_frames != gv.num_frames) {
      throw DimensionError("video '" + gv.id + "': prediction and ground truth lengths differ");
    }
    std::vector<MaskTrack> gt_tracks, pred_tracks;
    for (const auto& inst : gv.instances) gt_tracks.push_back(to_track(inst, gv.num_frames));
    for (const auto& inst : pv->instances) pred_tracks.push_back(to_track(inst, pv->num_frames));
    std::vector<std::vector<double>> cost;
    for (const auto& g : gt_tracks) {
      std::vector<double> row;
      for (const auto& p : pred_tracks) row.push_back(1.0 - st_iou(p, g));
      cost.push_back(std::move(row));
    }
    const std::vector<int> pairing = hungarian_match(cost);
    for (size_t g = 0; g < gt_tracks.size(); ++g) {
      if (pairing[g] == kUnassigned) continue;
      const JfResult r = j_and_f(pred_tracks[static_cast<size_t>(pairing[g])], gt_tracks[g], tol);
      j_sum += r.j;
      f_sum += r.f;
    }
  }
  JfResult out;
  out.j = count == 0 ? 1.0 : j_sum / static_cast<double>(count);
  out.f = count == 0 ? 1.0 : f_sum / static_cast<double>(count);
  out.jf = 0.5 * (out.j + out.f);
  return out;
}

double rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw DimensionError("rand_index: labelings differ in length");
  const size_t n = a.size();
  if (n < 2) return 1.0;
  int64_t agree = 0, total = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const bool same_a = a[i] >= 0 && a[i] == a[j];
      const bool same_b = b[i] >= 0 && b[i] == b[j];
      agree += same_a == same_b ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(total);
}

}  // namespace keymask
