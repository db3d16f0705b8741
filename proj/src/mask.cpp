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

#include "keymask/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "keymask/errors.hpp"

namespace keymask {

Bitmap::Bitmap(int height, int width, bool fill)
    : height_(height),
      width_(width),
      data_(static_cast<size_t>(std::max(height, 0)) * std::max(width, 0),
            fill ? 1 : 0) {}

int64_t Bitmap::count() const {
  return std::count(data_.begin(), data_.end(), uint8_t{1});
}

RleMask::RleMask(int height, int width, std::vector<uint32_t> runs)
    : height_(height), width_(width) {
  if (height <= 0 || width <= 0) {
    throw FormatError("RLE mask dimensions must be positive, got " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  const uint64_t total =
      std::accumulate(runs.begin(), runs.end(), uint64_t{0});
  const uint64_t expected = static_cast<uint64_t>(height) * width;
  if (total != expected) {
    throw FormatError("RLE runs sum to " + std::to_string(total) +
                      ", expected " + std::to_string(expected));
  }

  // Canonical form: a zero run at position i > 0 merges runs i-1 and i+1.
  runs_.reserve(runs.size());
  for (size_t i = 0; i < runs.size(); ++i) {
    if (i > 0 && runs[i] == 0) {
      if (i + 1 < runs.size()) {
        runs_.back() += runs[i + 1];
        ++i;
      }
      continue;
    }
    runs_.push_back(runs[i]);
  }
  if (runs_.empty()) runs_.push_back(0);

  starts_.resize(runs_.size());
  uint64_t pos = 0;
  for (size_t i = 0; i < runs_.size(); ++i) {
    starts_[i] = pos;
    pos += runs_[i];
    if (i % 2 == 1) area_ += runs_[i];
  }
}

RleMask RleMask::empty(int height, int width) {
  return RleMask(height, width,
                 {static_cast<uint32_t>(static_cast<uint64_t>(height) * width)});
}

bool RleMask::pixel(int row, int col) const {
  if (row < 0 || col < 0 || row >= height_ || col >= width_) return false;
  const uint64_t idx = static_cast<uint64_t>(col) * height_ + row;
  // Last run whose start is <= idx. Zero-length leading run is skipped
  // naturally because the following run shares its start.
  auto it = std::upper_bound(starts_.begin(), starts_.end(), idx);
  const size_t run = static_cast<size_t>(it - starts_.begin()) - 1;
  return run % 2 == 1;
}

RleMask rle_encode(const Bitmap& bitmap) {
  if (bitmap.empty()) throw DimensionError("cannot encode an empty grid");
  std::vector<uint32_t> runs;
  bool current = false;
  uint32_t length = 0;
  for (int col = 0; col < bitmap.width(); ++col) {
    for (int row = 0; row < bitmap.height(); ++row) {
      const bool v = bitmap.at(row, col);
      if (v != current) {
        runs.push_back(length);
        length = 0;
        current = v;
      }
      ++length;
    }
  }
  runs.push_back(length);
  return RleMask(bitmap.height(), bitmap.width(), std::move(runs));
}

Bitmap rle_decode(const RleMask& mask) {
  Bitmap out(mask.height(), mask.width());
  uint64_t idx = 0;
  const auto h = static_cast<uint64_t>(mask.height());
  const auto& runs = mask.runs();
  for (size_t i = 0; i < runs.size(); ++i) {
    if (i % 2 == 1) {
      for (uint64_t k = idx; k < idx + runs[i]; ++k) {
        out.set(static_cast<int>(k % h), static_cast<int>(k / h), true);
      }
    }
    idx += runs[i];
  }
  return out;
}

int64_t intersection_area(const RleMask& a, const RleMask& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError("mask size mismatch");
  }
  // Walk both run sequences in lockstep, as in the COCO merge.
  const auto& ra = a.runs();
  const auto& rb = b.runs();
  size_t ia = 0, ib = 0;
  uint64_t left_a = ra[0], left_b = rb[0];
  bool va = false, vb = false;
  int64_t inter = 0;
  while (true) {
    while (left_a == 0 && ia + 1 < ra.size()) {
      left_a = ra[++ia];
      va = !va;
    }
    while (left_b == 0 && ib + 1 < rb.size()) {
      left_b = rb[++ib];
      vb = !vb;
    }
    if (left_a == 0 || left_b == 0) break;
    const uint64_t step = std::min(left_a, left_b);
    if (va && vb) inter += static_cast<int64_t>(step);
    left_a -= step;
    left_b -= step;
  }
  return inter;
}

double mask_iou(const RleMask& a, const RleMask& b) {
  const int64_t inter = intersection_area(a, b);
  const int64_t uni = a.area() + b.area() - inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

bool contains_point(const RleMask& mask, const Point2& p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
  const double col = std::floor(p.x);
  const double row = std::floor(p.y);
  if (col < 0 || row < 0 || col >= mask.width() || row >= mask.height()) {
    return false;
  }
  return mask.pixel(static_cast<int>(row), static_cast<int>(col));
}

}  // namespace keymask
