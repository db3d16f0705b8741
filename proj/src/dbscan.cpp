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

#include "keymask/dbscan.hpp"

#include <cmath>
#include <deque>
#include <string>

#include "keymask/errors.hpp"

namespace keymask {

int hamming_distance(std::span<const int32_t> a, std::span<const int32_t> b) {
  if (a.size() != b.size()) {
    throw DimensionError("hamming distance on sequences of length " +
                         std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  int d = 0;
  for (size_t i = 0; i < a.size(); ++i) d += a[i] != b[i] ? 1 : 0;
  return d;
}

double hamming_metric(const Sequence& a, const Sequence& b) {
  return static_cast<double>(hamming_distance(a, b));
}

double DbscanParams::resolve_eps(int sequence_length) const {
  if (eps) return *eps;
  return std::ceil(0.1 * sequence_length);
}

ClusterLabels dbscan(std::span<const Sequence> items, double eps, int min_pts,
                     const Metric& metric) {
  if (eps < 0.0) throw InputError("dbscan: eps must be >= 0");
  if (min_pts < 1) throw InputError("dbscan: min_pts must be >= 1");
  const size_t n = items.size();
  ClusterLabels out;
  out.labels.assign(n, kNoise);
  out.core.assign(n, false);
  if (n == 0) return out;
  for (const auto& item : items) {
    if (item.size() != items[0].size()) throw InputError("dbscan: items differ in length");
  }

  std::vector<std::vector<size_t>> neighbours(n);
  for (size_t i = 0; i < n; ++i) {
    neighbours[i].push_back(i);
    for (size_t j = i + 1; j < n; ++j) {
      if (metric(items[i], items[j]) <= eps) {
        neighbours[i].push_back(j);
        neighbours[j].push_back(i);
      }
    }
  }
  for (size_t i = 0; i < n; ++i) {
    out.core[i] = static_cast<int>(neighbours[i].size()) >= min_pts;
  }

  std::vector<bool> assigned(n, false);
  for (size_t seed = 0; seed < n; ++seed) {
    if (!out.core[seed] || assigned[seed]) continue;
    const int cluster = out.num_clusters++;
    std::deque<size_t> frontier{seed};
    assigned[seed] = true;
    out.labels[seed] = cluster;
    while (!frontier.empty()) {
      const size_t cur = frontier.front();
      frontier.pop_front();
      if (!out.core[cur]) continue;
      for (size_t nb : neighbours[cur]) {
        if (assigned[nb]) continue;
        assigned[nb] = true;
        out.labels[nb] = cluster;
        frontier.push_back(nb);
      }
    }
  }
  return out;
}

}  // namespace keymask
