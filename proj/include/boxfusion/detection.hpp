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

#include <cstddef>
#include <string>

#include "boxfusion/geometry.hpp"

namespace boxfusion {

// One detection inside a single image.
template <std::size_t D>
struct ScoredBox {
  AxisBox<D> box;
  int label = 0;
  double score = 0.0;
  // Index of the model that produced the box. For fused output this is the
  // model of the highest-scored contributing box.
  std::size_t model = 0;

  friend bool operator==(const ScoredBox&, const ScoredBox&) = default;
};

// A detection tagged with the image it belongs to, as read from or written
// to disk.
template <std::size_t D>
struct DetectionRecord {
  std::string image;
  AxisBox<D> box;
  int label = 0;
  double score = 0.0;

  friend bool operator==(const DetectionRecord&,
                         const DetectionRecord&) = default;
};

template <std::size_t D>
struct GroundTruthBox {
  AxisBox<D> box;
  int label = 0;
  std::string image;

  friend bool operator==(const GroundTruthBox&,
                         const GroundTruthBox&) = default;
};

template <std::size_t D>
DetectionRecord<D> to_record(std::string image, const ScoredBox<D>& b) {
  return DetectionRecord<D>{std::move(image), b.box, b.label, b.score};
}

template <std::size_t D>
ScoredBox<D> to_scored(const DetectionRecord<D>& r, std::size_t model = 0) {
  return ScoredBox<D>{r.box, r.label, r.score, model};
}

}  // namespace boxfusion
