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

#include <vector>

namespace keymask {

inline constexpr int kUnassigned = -1;

// Minimum-cost assignment of min(n, m) row/column pairs.
//
// Returns, for every row, its column or kUnassigned. Among optimal
// assignments the lexicographically smallest row->column vector is returned
// (unassigned rows sort after every column) for matrices up to
// kCanonicalHungarianLimit on a side; larger problems return whichever optimum
// the solver reaches first. Throws InputError on non-finite or ragged costs.
std::vector<int> hungarian_match(const std::vector<std::vector<double>>& cost);

inline constexpr int kCanonicalHungarianLimit = 12;

double assignment_cost(const std::vector<std::vector<double>>& cost,
                       const std::vector<int>& assignment);

}  // namespace keymask
