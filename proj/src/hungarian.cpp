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

#include "keymask/hungarian.hpp"

#include <cmath>
#include <limits>

#include "keymask/errors.hpp"

namespace keymask {

namespace {

// Square Kuhn-Munkres with row/column potentials, O(n^3). Returns row->col.
std::vector<int> solve_square(const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  if (n == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based internally; p[j] = row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, kUnassigned);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

double square_cost(const std::vector<std::vector<double>>& a, const std::vector<int>& asg) {
  double total = 0.0;
  for (size_t i = 0; i < asg.size(); ++i) total += a[i][static_cast<size_t>(asg[i])];
  return total;
}

// Optimal cost of the square sub-problem on the given rows and columns.
double sub_optimum(const std::vector<std::vector<double>>& a, const std::vector<int>& rows,
                   const std::vector<int>& cols) {
  if (rows.empty()) return 0.0;
  std::vector<std::vector<double>> sub(rows.size(), std::vector<double>(cols.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < cols.size(); ++j) {
      sub[i][j] = a[static_cast<size_t>(rows[i])][static_cast<size_t>(cols[j])];
    }
  }
  return square_cost(sub, solve_square(sub));
}

// Lexicographically smallest optimal assignment by greedy prefix fixing.
std::vector<int> canonicalize(const std::vector<std::vector<double>>& a, double optimum) {
  const int n = static_cast<int>(a.size());
  const double tol = 1e-9 * (1.0 + std::abs(optimum));
  std::vector<int> result(n, kUnassigned);
  std::vector<bool> col_used(n, false);
  double prefix = 0.0;
  for (int r = 0; r < n; ++r) {
    std::vector<int> rest_rows;
    for (int rr = r + 1; rr < n; ++rr) rest_rows.push_back(rr);
    for (int c = 0; c < n; ++c) {
      if (col_used[c]) continue;
      std::vector<int> rest_cols;
      for (int cc = 0; cc < n; ++cc) {
        if (!col_used[cc] && cc != c) rest_cols.push_back(cc);
      }
      const double total = prefix + a[r][c] + sub_optimum(a, rest_rows, rest_cols);
      if (total <= optimum + tol) {
        result[r] = c;
        col_used[c] = true;
        prefix += a[r][c];
        break;
      }
    }
  }
  return result;
}

}  // namespace

std::vector<int> hungarian_match(const std::vector<std::vector<double>>& cost) {
  const int rows = static_cast<int>(cost.size());
  if (rows == 0) return {};
  const int cols = static_cast<int>(cost[0].size());
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != cols) throw InputError("hungarian: ragged cost matrix");
    for (double c : row) {
      if (!std::isfinite(c)) throw InputError("hungarian: non-finite cost");
    }
  }
  if (cols == 0) return std::vector<int>(static_cast<size_t>(rows), kUnassigned);

  // Pad to square with zero-cost dummies; dummy columns have the highest
  // indices so "unassigned" sorts last in the lexicographic order.
  const int n = std::max(rows, cols);
  std::vector<std::vector<double>> square(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) square[i][j] = cost[i][j];
  }
  std::vector<int> asg = solve_square(square);
  if (n <= kCanonicalHungarianLimit) asg = canonicalize(square, square_cost(square, asg));

  std::vector<int> out(static_cast<size_t>(rows), kUnassigned);
  for (int i = 0; i < rows; ++i) {
    if (asg[i] < cols) out[static_cast<size_t>(i)] = asg[i];
  }
  return out;
}

double assignment_cost(const std::vector<std::vector<double>>& cost,
                       const std::vector<int>& assignment) {
  double total = 0.0;
  for (size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != kUnassigned) total += cost[i][static_cast<size_t>(assignment[i])];
  }
  return total;
}

}  // namespace keymask
