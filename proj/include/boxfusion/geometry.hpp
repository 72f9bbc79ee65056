/* Copyright 2026 The boxfusion Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "boxfusion/errors.hpp"

namespace boxfusion {

// Axis-aligned box in D dimensions, stored as a min corner and a max corner
// in normalized [0,1] coordinates. D = 2 is (x, y); D = 3 is (x, y, z).
template <std::size_t D>
struct AxisBox {
  static_assert(D == 2 || D == 3, "only 2D and 3D boxes are supported");
  static constexpr std::size_t kDims = D;

  std::array<double, D> lo{};
  std::array<double, D> hi{};

  friend bool operator==(const AxisBox&, const AxisBox&) = default;
};

using Box2D = AxisBox<2>;
using Box3D = AxisBox<3>;

inline Box2D make_box2d(double x1, double y1, double x2, double y2) {
  return Box2D{{x1, y1}, {x2, y2}};
}

inline Box3D make_box3d(double x1, double y1, double z1, double x2, double y2,
                        double z2) {
  return Box3D{{x1, y1, z1}, {x2, y2, z2}};
}

// Area for 2D, volume for 3D. Zero for degenerate boxes.
template <std::size_t D>
double volume(const AxisBox<D>& b) {
  double v = 1.0;
  for (std::size_t k = 0; k < D; ++k) v *= std::max(0.0, b.hi[k] - b.lo[k]);
  return v;
}

template <std::size_t D>
double intersection_volume(const AxisBox<D>& a, const AxisBox<D>& b) {
  double v = 1.0;
  for (std::size_t k = 0; k < D; ++k) {
    const double extent =
        std::min(a.hi[k], b.hi[k]) - std::max(a.lo[k], b.lo[k]);
    if (extent <= 0.0) return 0.0;
    v *= extent;
  }
  return v;
}

// Intersection over union given precomputed volumes. The union is formed as
// max + (min - inter) so that the result is bitwise symmetric and exact for
// nested boxes (min - inter is exactly zero when the smaller box is inside).
template <std::size_t D>
double iou_with_volumes(const AxisBox<D>& a, double vol_a,
                        const AxisBox<D>& b, double vol_b) {
  const double inter = intersection_volume(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni =
      std::max(vol_a, vol_b) + (std::min(vol_a, vol_b) - inter);
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

template <std::size_t D>
double iou(const AxisBox<D>& a, const AxisBox<D>& b) {
  return iou_with_volumes(a, volume(a), b, volume(b));
}

inline double iou2d(const Box2D& a, const Box2D& b) { return iou(a, b); }
inline double iou3d(const Box3D& a, const Box3D& b) { return iou(a, b); }

template <std::size_t D>
bool is_finite(const AxisBox<D>& b) {
  for (std::size_t k = 0; k < D; ++k)
    if (!std::isfinite(b.lo[k]) || !std::isfinite(b.hi[k])) return false;
  return true;
}

// True when corners are ordered and inside the unit cube.
template <std::size_t D>
bool is_valid(const AxisBox<D>& b) {
  for (std::size_t k = 0; k < D; ++k) {
    if (!(b.lo[k] >= 0.0 && b.hi[k] <= 1.0 && b.lo[k] <= b.hi[k]))
      return false;
  }
  return true;
}

// Clamps every coordinate to [0,1] and swaps reversed corners.
// Throws InvalidInput for NaN or infinite coordinates.
template <std::size_t D>
AxisBox<D> clip(AxisBox<D> b) {
  if (!is_finite(b)) throw InvalidInput("box has a non-finite coordinate");
  for (std::size_t k = 0; k < D; ++k) {
    b.lo[k] = std::clamp(b.lo[k], 0.0, 1.0);
    b.hi[k] = std::clamp(b.hi[k], 0.0, 1.0);
    if (b.lo[k] > b.hi[k]) std::swap(b.lo[k], b.hi[k]);
  }
  return b;
}

template <std::size_t D>
std::string to_string(const AxisBox<D>& b) {
  std::string s = "(";
  for (std::size_t k = 0; k < D; ++k) s += std::to_string(b.lo[k]) + ", ";
  for (std::size_t k = 0; k < D; ++k) {
    s += std::to_string(b.hi[k]);
    s += (k + 1 < D) ? ", " : ")";
  }
  return s;
}

}  // namespace boxfusion
