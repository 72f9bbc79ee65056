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
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "boxfusion/detection.hpp"
#include "boxfusion/fusion.hpp"
#include "boxfusion/ingestion.hpp"

namespace boxfusion {

struct WorkloadSpec {
  std::size_t boxes_per_image = 1000;  // per model
  std::size_t classes = 10;
  std::size_t models = 3;
  std::size_t images = 100;
  std::uint64_t seed = 42;
};

template <std::size_t D>
struct Workload {
  std::vector<DetectionGroups<D>> per_model;
  std::vector<GroundTruthBox<D>> ground_truth;
};

inline std::string synthetic_image_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img%06zu", i);
  return buf;
}

// Seeded ensemble workload: each image holds `boxes_per_image` objects with
// random labels; every model predicts each object once, with its corners
// jittered by 10% of the object extent and a score drawn from U[0.3, 1].
template <std::size_t D>
Workload<D> generate_workload(const WorkloadSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> extent(0.02, 0.1);
  std::uniform_real_distribution<double> score(0.3, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> label(
      0, static_cast<int>(std::max<std::size_t>(spec.classes, 1)) - 1);

  Workload<D> w;
  w.per_model.resize(spec.models);
  for (std::size_t i = 0; i < spec.images; ++i) {
    const std::string id = synthetic_image_id(i);
    for (std::size_t o = 0; o < spec.boxes_per_image; ++o) {
      GroundTruthBox<D> gt;
      gt.image = id;
      gt.label = label(rng);
      std::array<double, D> size{};
      for (std::size_t k = 0; k < D; ++k) {
        size[k] = extent(rng);
        gt.box.lo[k] = unit(rng) * (1.0 - size[k]);
        gt.box.hi[k] = gt.box.lo[k] + size[k];
      }
      for (std::size_t m = 0; m < spec.models; ++m) {
        DetectionRecord<D> r;
        r.image = id;
        r.label = gt.label;
        r.score = score(rng);
        for (std::size_t k = 0; k < D; ++k) {
          r.box.lo[k] = gt.box.lo[k] + 0.1 * size[k] * noise(rng);
          r.box.hi[k] = gt.box.hi[k] + 0.1 * size[k] * noise(rng);
        }
        r.box = clip(r.box);
        w.per_model[m][id].push_back(std::move(r));
      }
      w.ground_truth.push_back(std::move(gt));
    }
  }
  return w;
}

struct BenchRow {
  Method method = Method::nms;
  double seconds = 0.0;
  double ratio_to_nms = 0.0;
  std::size_t boxes_out = 0;
};

// Times every method (default parameters, equal weights, one thread) over
// the workload and reports the best of `repeats` runs.
template <std::size_t D>
std::vector<BenchRow> run_bench(const Workload<D>& w, std::size_t repeats = 3) {
  const auto images =
      assemble(w.per_model, std::vector<double>(w.per_model.size(), 1.0));
  std::vector<const PredictionSet<D>*> sets;
  for (const auto& [id, s] : images) sets.push_back(&s);

  std::vector<BenchRow> rows;
  for (Method m : kAllMethods) {
    const FusionParams params = default_params(m);
    BenchRow row;
    row.method = m;
    row.seconds = -1.0;
    for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
      std::size_t out = 0;
      const auto start = std::chrono::steady_clock::now();
      for (const auto* s : sets) out += fuse(*s, params).size();
      const std::chrono::duration<double> dt =
          std::chrono::steady_clock::now() - start;
      if (row.seconds < 0.0 || dt.count() < row.seconds) row.seconds = dt.count();
      row.boxes_out = out;
    }
    rows.push_back(row);
  }
  double nms_time = 0.0;
  for (const auto& r : rows)
    if (r.method == Method::nms) nms_time = r.seconds;
  for (auto& r : rows)
    r.ratio_to_nms = nms_time > 0.0 ? r.seconds / nms_time : 0.0;
  return rows;
}

}  // namespace boxfusion
