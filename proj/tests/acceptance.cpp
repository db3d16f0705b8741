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


// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cases.hpp"
#include "keymask/dbscan.hpp"
#include "keymask/discovery.hpp"
#include "keymask/hungarian.hpp"
#include "keymask/losses.hpp"
#include "keymask/metrics.hpp"
#include "keymask/pipeline.hpp"
#include "keymask/propagator.hpp"
#include "keymask/synth.hpp"
#include "keymask/training.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

namespace keymask {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Keymask recovery ---------------------------------------------------------

Outcome recovery() {
  const auto start = Clock::now();
  const SynthConfig synth;
  const DiscoveryConfig disc;
  double ri_sum = 0.0;
  int noise = 0, noise_caught = 0;
  constexpr int kSeeds = 100;
  for (uint64_t seed = 0; seed < kSeeds; ++seed) {
    const SyntheticVideo v = synth_generate(synth, seed);
    const VideoDiscovery d = discover_video(v.id, v.num_frames, v.tracks, disc);
    ri_sum += rand_index(v.assignment, d.mask_assignment);
    for (size_t k = 0; k < v.assignment.size(); ++k) {
      if (v.assignment[k] != kNoiseInstance) continue;
      ++noise;
      noise_caught += d.mask_assignment[k] == kNoise;
    }
  }
  const double ri = ri_sum / kSeeds;
  const double caught = noise > 0 ? static_cast<double>(noise_caught) / noise : 1.0;
  const double secs = seconds_since(start);
  return {ri >= 0.95 && caught >= 0.9 && secs <= 60.0,
          fmt("mean RI %.4f (>= 0.95), noise in outliers %d/%d = %.3f (>= 0.9), %.1f s (<= 60)",
              ri, noise_caught, noise, caught, secs)};
}

// Point-mask Jaccard and the matching matrix --------------------------------

double recount_visibility(const InstanceTrack& track, int t) {
  int vis = 0;
  for (const auto& traj : track.trajectories) vis += traj.visible[static_cast<size_t>(t)];
  return static_cast<double>(vis) / static_cast<double>(track.trajectories.size());
}

double recount_jaccard(const InstanceTrack& track, const RleMask& mask, int t) {
  const auto grid = oracle::decode(mask);
  int in = 0;
  for (const auto& traj : track.trajectories) {
    const Point2 p = traj.coords[static_cast<size_t>(t)];
    in += oracle::inside(grid, p.x, p.y);
  }
  return static_cast<double>(in) / static_cast<double>(track.trajectories.size());
}

InstanceTrack random_track(std::mt19937_64& rng, int frames, int h, int w, int max_points,
                           double density) {
  std::uniform_real_distribution<double> x(-2.0, w + 2.0), y(-2.0, h + 2.0);
  std::bernoulli_distribution vis(0.6);
  InstanceTrack track;
  track.source_frame = std::uniform_int_distribution<int>(0, frames - 1)(rng);
  track.source_mask = oracle::random_mask(rng, h, w, density);
  const int n = std::uniform_int_distribution<int>(1, max_points)(rng);
  for (int j = 0; j < n; ++j) {
    Trajectory traj;
    for (int t = 0; t < frames; ++t) {
      traj.coords.push_back({x(rng), y(rng)});
      traj.visible.push_back(vis(rng));
    }
    track.trajectories.push_back(std::move(traj));
  }
  return track;
}

Outcome jaccard_exactness() {
  std::mt19937_64 rng(101);
  int recount_bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int frames = std::uniform_int_distribution<int>(1, 8)(rng);
    const InstanceTrack track = random_track(rng, frames, 20, 24, 40, 0.4);
    const RleMask mask = oracle::random_mask(rng, 20, 24, 0.5);
    const int t = std::uniform_int_distribution<int>(0, frames - 1)(rng);
    recount_bad += point_mask_jaccard(track, mask, t) != recount_jaccard(track, mask, t);
  }

  // Small point counts make J = 0.5 exactly a common value.
  int entries = 0, entry_bad = 0, at_half = 0, at_half_matched = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int frames = 4;
    std::vector<InstanceTrack> tracks;
    for (int k = 0; k < 6; ++k) tracks.push_back(random_track(rng, frames, 6, 6, 4, 0.5));
    VisibilityGroup group;
    for (int k = 0; k < 6; ++k) group.members.push_back(k);
    const MatchingMatrix mm =
        build_matching_matrix(group, tracks, kDefaultGammaThr, kDefaultLambdaJ);
    for (int i = 0; i < mm.size(); ++i) {
      for (int k = 0; k < mm.size(); ++k) {
        const auto& tr = tracks[static_cast<size_t>(mm.member(i))];
        const auto& mk = tracks[static_cast<size_t>(mm.member(k))];
        const int t = mk.source_frame;
        const double j = recount_jaccard(tr, mk.source_mask, t);
        const bool visible = recount_visibility(tr, t) > 0.3;
        ++entries;
        entry_bad += mm.matched(i, k) != (visible && j > 0.5);
        if (visible && j == 0.5) {
          ++at_half;
          at_half_matched += mm.matched(i, k);
        }
      }
    }
  }
  return {recount_bad == 0 && entry_bad == 0 && at_half > 0 && at_half_matched == 0,
          fmt("recount mismatches %d/1000; matrix entries wrong %d/%d; "
              "visible entries with J = 0.5: %d, matched %d",
              recount_bad, entry_bad, entries, at_half, at_half_matched)};
}

// DBSCAN -------------------------------------------------------------------

Outcome dbscan_equivalence() {
  std::string first_failure;
  int failures = 0, total = 0;
  for (bool categorical : {false, true}) {
    std::mt19937_64 rng(categorical ? 202 : 201);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = std::uniform_int_distribution<int>(1, 64)(rng);
      const int len = std::uniform_int_distribution<int>(3, 30)(rng);
      const auto items = oracle::random_sequences(rng, n, len, categorical);
      const double eps = trial % 4 == 0 ? DbscanParams{}.resolve_eps(len)
                                        : std::uniform_int_distribution<int>(0, len / 3)(rng);
      const int min_pts = std::uniform_int_distribution<int>(1, 5)(rng);
      const ClusterLabels out = dbscan(items, eps, min_pts, hamming_metric);
      const std::string why = oracle::dbscan_disagreement(items, eps, min_pts, out.labels, out.core);
      ++total;
      if (!why.empty()) {
        ++failures;
        if (first_failure.empty()) first_failure = why;
      }
    }
  }
  return {failures == 0, fmt("%d/%d instances differ from the reference%s%s", failures, total,
                             first_failure.empty() ? "" : ", first: ", first_failure.c_str())};
}

// Hungarian ----------------------------------------------------------------

Outcome hungarian_equivalence() {
  std::mt19937_64 rng(301);
  int bad = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int rows = std::uniform_int_distribution<int>(1, 7)(rng);
    const int cols = std::uniform_int_distribution<int>(1, 7)(rng);
    // Multiples of 1/8 keep every sum exact; a small range forces ties.
    const int range = trial % 2 == 0 ? 4 : 400;
    std::uniform_int_distribution<int> v(-range, range);
    std::vector<std::vector<double>> cost(static_cast<size_t>(rows));
    for (auto& row : cost) {
      for (int c = 0; c < cols; ++c) row.push_back(v(rng) / 8.0);
    }
    const std::vector<int> a = hungarian_match(cost);
    std::vector<bool> used(static_cast<size_t>(cols));
    int assigned = 0;
    bool valid = a.size() == static_cast<size_t>(rows);
    for (int c : a) {
      if (c == kUnassigned) continue;
      valid = valid && c >= 0 && c < cols && !used[static_cast<size_t>(c)];
      if (valid) used[static_cast<size_t>(c)] = true;
      ++assigned;
    }
    valid = valid && assigned == std::min(rows, cols);
    bad += !valid || assignment_cost(cost, a) != oracle::brute_assignment(cost);
  }
  return {bad == 0, fmt("%d/300 matrices differ from the factorial minimum", bad)};
}

// Gradient checks ----------------------------------------------------------

constexpr double kFdStep = 1e-6;
constexpr double kGradTol = 1e-4;

std::vector<uint8_t> bits_of(const RleMask& m) {
  std::vector<uint8_t> out;
  for (const auto& row : oracle::decode(m)) {
    for (bool b : row) out.push_back(b ? 1 : 0);
  }
  return out;
}

double direct_bce(std::span<const double> p, std::span<const uint8_t> y) {
  double sum = 0.0;
  for (size_t k = 0; k < p.size(); ++k) {
    const double q = std::clamp(p[k], 1e-7, 1.0 - 1e-7);
    sum -= y[k] ? std::log(q) : std::log(1.0 - q);
  }
  return sum / static_cast<double>(p.size());
}

double direct_dice(std::span<const double> p, std::span<const uint8_t> y) {
  double py = 0.0, sp = 0.0, sy = 0.0;
  for (size_t k = 0; k < p.size(); ++k) {
    py += p[k] * y[k];
    sp += p[k];
    sy += y[k];
  }
  return 1.0 - (2.0 * py + 1.0) / (sp + sy + 1.0);
}

double direct_mask(std::span<const double> p, std::span<const uint8_t> y) {
  return 5.0 * direct_bce(p, y) + 5.0 * direct_dice(p, y);
}

// Sum over annotated, non-empty frames of the direct mask loss for the
// given instance -> slot assignment.
double direct_volume_sum(const PredVolume& v, const std::vector<InstanceTargets>& annots,
                         const std::vector<int>& slot_of) {
  double sum = 0.0;
  for (size_t i = 0; i < annots.size(); ++i) {
    if (i >= slot_of.size() || slot_of[i] < 0) continue;
    for (int t = 0; t < v.frames(); ++t) {
      const auto& target = annots[i][static_cast<size_t>(t)];
      if (!target) continue;
      int area = 0;
      for (uint8_t b : target->bits) area += b;
      if (area == 0) continue;
      sum += direct_mask(v.grid(slot_of[i], t), target->bits);
    }
  }
  return sum;
}

std::vector<double> fd(const std::function<double(const std::vector<double>&)>& f,
                       const std::vector<double>& x) {
  return oracle::numeric_gradient(f, x, kFdStep);
}

struct GradStats {
  double worst = 0.0;
  int cases = 0;
  void add(double err) {
    worst = std::max(worst, err);
    ++cases;
  }
};

Outcome gradient_checks() {
  std::map<std::string, GradStats> stats;
  std::mt19937_64 rng(401);
  for (int trial = 0; trial < 50; ++trial) {
    const ProbGrid p = cases::random_probs(rng, 8, 8);
    const RleMask gt = cases::random_target(rng, 8, 8);
    const auto y = bits_of(gt);
    const auto grid_fd = [&](double (*f)(std::span<const double>, std::span<const uint8_t>)) {
      return fd([&](const std::vector<double>& x) { return f(x, y); }, p.values);
    };
    stats["bce"].add(oracle::max_relative_error(bce_loss(p, gt).grad, grid_fd(direct_bce)));
    stats["dice"].add(oracle::max_relative_error(dice_loss(p, gt).grad, grid_fd(direct_dice)));
    stats["mask_loss"].add(
        oracle::max_relative_error(mask_loss(p, gt, LossWeights{}).grad, grid_fd(direct_mask)));
  }
  for (int trial = 0; trial < 50; ++trial) {
    const PredVolume v = cases::random_volume(rng, 2, 3, 8, 8);
    const auto annots = cases::random_annotations(rng, 2, 3, 8, 8, 0.6);
    const VolumeLoss out = temporal_droploss(v, annots, LossWeights{});
    const auto numeric = fd(
        [&](const std::vector<double>& x) {
          PredVolume q = v;
          q.values() = x;
          return direct_volume_sum(q, annots, {0, 1});
        },
        v.values());
    stats["temporal_droploss"].add(oracle::max_relative_error(out.grad.values(), numeric));
  }
  for (int trial = 0; trial < 50; ++trial) {
    const PredVolume v = cases::random_volume(rng, 3, 2, 8, 8);
    const auto sparse = cases::random_annotations(rng, 2, 2, 8, 8, 0.6);
    const auto teacher = cases::random_annotations(rng, 2, 2, 8, 8, 1.0);
    const FullLoss out = full_loss(v, sparse, teacher, LossWeights{});
    // The matching is piecewise constant, so it is held at the analytic point.
    const auto numeric = fd(
        [&](const std::vector<double>& x) {
          PredVolume q = v;
          q.values() = x;
          return direct_volume_sum(q, sparse, out.sparse_assignment) +
                 direct_volume_sum(q, teacher, out.distill_assignment);
        },
        v.values());
    stats["full_loss"].add(oracle::max_relative_error(out.grad.values(), numeric));
  }
  for (int trial = 0; trial < 50; ++trial) {
    constexpr int kSlots = 2, kDim = 4, kFrames = 3;
    const FeatureVideo video = cases::random_features(rng, kFrames, 8, 8, kDim);
    const ToyPropagator m = ToyPropagator::random({kSlots, kDim, kFrames},
                                                  static_cast<uint64_t>(trial), 0.5, 0.0);
    std::vector<int> frames{0, 1, 2};
    frames.erase(frames.begin() + trial % 3);
    const PredVolume probs = toy_forward(m, video, frames);
    const PredVolume upstream = cases::random_volume(rng, kSlots, 2, 8, 8);
    const ParamVector analytic = toy_backward(m, video, frames, probs, upstream);
    // f(params) = <upstream, sigmoid(w . feature + b)> written out directly.
    const auto direct = [&](const std::vector<double>& x) {
      double f = 0.0;
      size_t k = 0;
      for (int q = 0; q < kSlots; ++q) {
        for (int t : frames) {
          for (int r = 0; r < 8; ++r) {
            for (int c = 0; c < 8; ++c) {
              double z = x[static_cast<size_t>(kSlots * kDim + q * kFrames + t)];
              for (int ch = 0; ch < kDim; ++ch) {
                z += x[static_cast<size_t>(q * kDim + ch)] * video.at(t, r, c, ch);
              }
              f += upstream.values()[k++] / (1.0 + std::exp(-z));
            }
          }
        }
      }
      return f;
    };
    stats["toy_forward"].add(oracle::max_relative_error(analytic, fd(direct, m.params())));
  }
  bool pass = true;
  std::ostringstream detail;
  for (const char* name :
       {"bce", "dice", "mask_loss", "temporal_droploss", "full_loss", "toy_forward"}) {
    const GradStats& s = stats[name];
    pass = pass && s.cases == 50 && s.worst <= kGradTol;
    detail << name << " " << fmt("%.2e", s.worst) << " ";
  }
  detail << "(worst relative error over 50 cases each, <= 1e-4)";
  return {pass, detail.str()};
}

// DropLoss degeneracy ------------------------------------------------------

Outcome droploss_degeneracy() {
  std::mt19937_64 rng(501);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int slots = std::uniform_int_distribution<int>(1, 4)(rng);
    const int frames = std::uniform_int_distribution<int>(1, 5)(rng);
    const PredVolume v = cases::random_volume(rng, slots, frames, 8, 8);
    std::vector<InstanceTargets> annots(static_cast<size_t>(slots));
    for (auto& inst : annots) {
      for (int t = 0; t < frames; ++t) inst.push_back(make_target(cases::random_target(rng, 8, 8)));
    }
    double frame_sum = 0.0;
    for (int i = 0; i < slots; ++i) {
      for (int t = 0; t < frames; ++t) {
        const auto g = v.grid(i, t);
        const auto& target = *annots[static_cast<size_t>(i)][static_cast<size_t>(t)];
        frame_sum += mask_kernel(g, target, LossWeights{}, {}, 1.0);
      }
    }
    const double drop = temporal_droploss(v, annots, LossWeights{}).loss;
    worst = std::max(worst, std::abs(drop - frame_sum) / frame_sum);
  }
  const double tol = 64 * std::numeric_limits<double>::epsilon();
  return {worst <= tol, fmt("worst relative difference %.2e over 50 dense cases (<= %.1e)",
                            worst, tol)};
}

// Implicit propagation -----------------------------------------------------

Outcome implicit_propagation() {
  const auto start = Clock::now();
  const SynthConfig synth;
  std::vector<SyntheticVideo> videos;
  Labelset gt;
  gt.kind = LabelsetKind::kGroundTruth;
  FeatureIndex index;
  for (uint64_t seed = 0; seed < 10; ++seed) videos.push_back(synth_generate(synth, seed));
  for (const auto& v : videos) {
    index[v.id] = &v.features;
    const Labelset one = ground_truth_labels(v);
    gt.videos.insert(gt.videos.end(), one.videos.begin(), one.videos.end());
  }
  const Labelset sparse = cases::drop_frames(gt, 0.5, 17);
  TrainConfig config;
  config.seed = 5;
  const TrainResult s1 = train_stage1(sparse, index, config);
  const double iou1 = heldout_iou(s1.teacher, index, gt, sparse);
  const Labelset dense = densify(s1.teacher, index, config.threshold, config.area_floor);
  const TrainResult s2 = train_stage2(dense, index, config);
  const double iou2 = heldout_iou(s2.teacher, index, gt, sparse);
  const double secs = seconds_since(start);
  return {iou1 >= 0.7 && iou2 >= iou1 && secs <= 600.0,
          fmt("held-out IoU stage 1 %.4f (>= 0.7), stage 2 %.4f (>= stage 1), %.1f s (<= 600)",
              iou1, iou2, secs)};
}

// Metrics sanity -----------------------------------------------------------

Outcome metrics_sanity() {
  Labelset gt;
  gt.kind = LabelsetKind::kGroundTruth;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const Labelset one = ground_truth_labels(synth_generate(SynthConfig{}, seed));
    gt.videos.insert(gt.videos.end(), one.videos.begin(), one.videos.end());
  }
  const double ap = video_ap(gt, gt).ap;
  const double jf = dataset_j_and_f(gt, gt).jf;

  // Two ground-truth boxes on frame 0 of a 10x10 two-frame video; predictions
  // with IoU 0.8 (score 0.9), a frame-1 blob hitting nothing (0.8), IoU 0.6 (0.7).
  const auto inst = [](int id, int t, RleMask m, double score) {
    InstanceLabels l;
    l.id = id;
    l.masks[t] = std::move(m);
    l.score = score;
    return l;
  };
  Labelset hg, hp;
  hg.videos.push_back({"v", 2,
                       {inst(0, 0, oracle::box_mask(10, 10, 0, 0, 5, 10), 1.0),
                        inst(1, 0, oracle::box_mask(10, 10, 5, 0, 10, 10), 1.0)},
                       false});
  hp.videos.push_back({"v", 2,
                       {inst(0, 0, oracle::box_mask(10, 10, 0, 0, 4, 10), 0.9),
                        inst(1, 1, oracle::box_mask(10, 10, 2, 2, 6, 6), 0.8),
                        inst(2, 0, oracle::box_mask(10, 10, 7, 0, 10, 10), 0.7)},
                       false});
  const ApResult hand = video_ap(hp, hg, {0.5, 0.75});
  const double want50 = oracle::ap_from_hits({true, false, true}, 2);
  const double want75 = oracle::ap_from_hits({true, false, false}, 2);
  const bool hand_ok = std::abs(hand.per_threshold[0] - want50) <= 1e-12 &&
                       std::abs(hand.per_threshold[1] - want75) <= 1e-12;

  const MaskTrack full{rle_encode(Bitmap(4, 4, true))};
  const MaskTrack half{oracle::box_mask(4, 4, 0, 0, 4, 2)};
  const double j = j_and_f(half, full).j;

  return {ap == 1.0 && jf == 1.0 && hand_ok && j == 0.5,
          fmt("GT vs GT AP %.6f J&F %.6f; hand case AP@0.5 %.6f (oracle %.6f), "
              "AP@0.75 %.6f (oracle %.6f); half-overlap J %.6f",
              ap, jf, hand.per_threshold[0], want50, hand.per_threshold[1], want75, j)};
}

// End-to-end determinism ---------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return files;
}

std::map<std::string, std::string> full_run(const fs::path& dir) {
  PipelineConfig c;
  c.seed = 11;
  c.num_videos = 4;
  c.train.steps = 300;
  c.train.mu = 0.99;
  cmd_synth(c, dir);
  cmd_discover(c, dir, dir / "sparse.json", dir / "report.json");
  cmd_train(c, 1, dir / "sparse.json", dir, dir / "stage1");
  cmd_train(c, 2, dir / "stage1" / "dense.json", dir, dir / "stage2");
  cmd_eval(c, dir / "stage2" / "model.kmm", dir / "gt.json", dir, EvalOptions{},
           dir / "metrics.json");
  return snapshot(dir);
}

Outcome determinism() {
  testing_util::TempDir a, b;
  const auto first = full_run(a.path());
  const auto second = full_run(b.path());
  int differing = 0;
  for (const auto& [name, bytes] : first) {
    auto it = second.find(name);
    differing += it == second.end() || it->second != bytes;
  }
  const bool have_all = first.count("sparse.json") && first.count("stage1/model.kmm") &&
                        first.count("stage2/model.kmm") && first.count("stage2/dense.json") &&
                        first.count("metrics.json");
  return {differing == 0 && first.size() == second.size() && have_all,
          fmt("%zu files per run, %d differ", first.size(), differing)};
}

}  // namespace
}  // namespace keymask

int main() {
  using namespace keymask;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"keymask recovery on the 100-seed suite", recovery},
      {"point-mask jaccard recount and strict matching threshold", jaccard_exactness},
      {"dbscan matches the quadratic reference", dbscan_equivalence},
      {"hungarian matches the brute-force minimum", hungarian_equivalence},
      {"analytic gradients match finite differences", gradient_checks},
      {"droploss reduces to the per-frame sum on dense labels", droploss_degeneracy},
      {"implicit propagation to held-out frames", implicit_propagation},
      {"metrics sanity", metrics_sanity},
      {"end-to-end determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
