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

namespace keymask {

// Boolean or categorical sequence. Visibility vectors use 0/1; matching
// tracks use mask indices with kNoMatch for "no match at this frame".
using Sequence = std::vector<int32_t>;

inline constexpr int32_t kNoMatch = -1;

// Number of positions where a and b differ. Throws DimensionError on a
// length mismatch.
int hamming_distance(std::span<const int32_t> a, std::span<const int32_t> b);

using Metric = std::function<double(const Sequence&, const Sequence&)>;

inline constexpr int kNoise = -1;

struct ClusterLabels {
  // Cluster id per item, contiguous from 0, or kNoise.
  std::vector<int> labels;
  // True for core items (>= min_pts neighbours within eps, self included).
  std::vector<bool> core;
  int num_clusters = 0;
};

struct DbscanParams {
  // Neighbourhood radius; when unset it resolves to ceil(0.1 * length).
  std::optional<double> eps;
  int min_pts = 2;

  double resolve_eps(int sequence_length) const;
};

// Density-based clustering. Items are scanned in index order; a cluster is
// grown breadth-first from its lowest-index core item, and a border item
// joins the first cluster that reaches it. Throws InputError for eps < 0,
// min_pts < 1 or ragged input.
ClusterLabels dbscan(std::span<const Sequence> items, double eps, int min_pts,
                     const Metric& metric);

// Hamming metric wrapper for dbscan.
double hamming_metric(const Sequence& a, const Sequence& b);

}  // namespace keymask
