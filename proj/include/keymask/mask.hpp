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
#include <vector>

namespace keymask {

// Dense binary image, row-major, (row, col) indexing.
class Bitmap {
 public:
  Bitmap() = default;
  Bitmap(int height, int width, bool fill = false);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return height_ == 0 || width_ == 0; }

  bool at(int row, int col) const {
    return data_[static_cast<size_t>(row) * width_ + col] != 0;
  }
  void set(int row, int col, bool value) {
    data_[static_cast<size_t>(row) * width_ + col] = value ? 1 : 0;
  }
  bool in_bounds(int row, int col) const {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }

  int64_t count() const;

  friend bool operator==(const Bitmap&, const Bitmap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<uint8_t> data_;
};

// Sub-pixel image location. x is the column, y is the row.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

// Run-length encoded binary mask.
//
// Runs alternate background/foreground over pixels in column-major order
// (index = col * height + row), always starting with a background run that
// may be empty. This is the uncompressed COCO convention. Only the leading
// run may be zero, so every mask has exactly one encoding.
class RleMask {
 public:
  RleMask() = default;

  // Validates and canonicalizes: interior zero runs are folded into their
  // neighbours and a trailing zero run is dropped. Throws FormatError if the
  // dimensions are not positive or the runs do not sum to height * width.
  RleMask(int height, int width, std::vector<uint32_t> runs);

  // All-background mask.
  static RleMask empty(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  const std::vector<uint32_t>& runs() const { return runs_; }

  int64_t area() const { return area_; }
  bool is_empty() const { return area_ == 0; }

  // Foreground test for an integer pixel; out-of-range pixels are background.
  bool pixel(int row, int col) const;

  friend bool operator==(const RleMask& a, const RleMask& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.runs_ == b.runs_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<uint32_t> runs_;
  // starts_[i] is the linear index of the first pixel of runs_[i].
  std::vector<uint64_t> starts_;
  int64_t area_ = 0;
};

// Throws DimensionError on an empty grid.
RleMask rle_encode(const Bitmap& bitmap);

Bitmap rle_decode(const RleMask& mask);

int64_t intersection_area(const RleMask& a, const RleMask& b);

// |a ∩ b| / |a ∪ b|, or 1.0 when both masks are empty. Throws DimensionError
// if the masks differ in size.
double mask_iou(const RleMask& a, const RleMask& b);

// True iff floor(p) is inside the image and that pixel is foreground.
bool contains_point(const RleMask& mask, const Point2& p);

}  // namespace keymask
