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
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "boxfusion/detection.hpp"
#include "boxfusion/errors.hpp"
#include "boxfusion/evaluation.hpp"
#include "boxfusion/fusion.hpp"
#include "boxfusion/ingestion.hpp"
#include "boxfusion/parallel.hpp"

namespace boxfusion {

// Candidate values per parameter. An empty list means "the method default"
// (uniform weights for `weights`).
struct ParamGrid {
  std::vector<double> iou_threshold;
  std::vector<double> skip_threshold;
  std::vector<RescaleVariant> rescale;
  std::vector<double> score_power;
  std::vector<double> soft_sigma;
  std::vector<double> soft_score_threshold;
  std::vector<std::vector<double>> weights;
};

struct GridPoint {
  FusionParams params;
  std::vector<double> weights;

  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

struct TuneEntry {
  GridPoint point;
  double map = 0.0;
};

struct TuneResult {
  GridPoint best;
  double best_map = 0.0;
  std::vector<TuneEntry> table;  // in enumeration order
};

class GridTooLarge : public InvalidParameter {
 public:
  GridTooLarge(std::size_t size, std::size_t cap)
      : InvalidParameter("parameter grid has " + std::to_string(size) +
                         " points, above the cap of " + std::to_string(cap)),
        size_(size) {}
  std::size_t size() const noexcept { return size_; }

 private:
  std::size_t size_;
};

struct TuneOptions {
  std::size_t cap = 10000;
  std::size_t workers = 0;  // 0 = default_workers()
};

// Default search space used by the CLI when no grid file is given.
inline ParamGrid default_grid(Method m) {
  ParamGrid g;
  if (m == Method::soft_nms_gaussian) {
    g.soft_sigma = {0.05, 0.1, 0.15, 0.2, 0.3, 0.5};
    g.soft_score_threshold = {1e-3};
  } else {
    for (int k = 0; k <= 9; ++k) g.iou_threshold.push_back((35 + 5 * k) / 100.0);
  }
  return g;
}

// JSON object: parameter name -> list of values; "weights" is a list of
// weight vectors and "rescale" a list of "clamped"/"unclamped".
inline ParamGrid parse_grid(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("grid must be a JSON object");
  ParamGrid g;
  auto numbers = [&](const std::string& key, std::vector<double>& dst) {
    if (!j.contains(key)) return;
    dst = j.at(key).get<std::vector<double>>();
  };
  try {
    for (const auto& [key, value] : j.items()) {
      static const std::vector<std::string> known = {
          "iou_threshold", "skip_threshold",       "rescale", "score_power",
          "soft_sigma",    "soft_score_threshold", "weights"};
      if (std::find(known.begin(), known.end(), key) == known.end())
        throw ConfigError("unknown grid parameter '" + key + "'");
      if (!value.is_array())
        throw ConfigError("grid parameter '" + key + "' must be a list");
    }
    numbers("iou_threshold", g.iou_threshold);
    numbers("skip_threshold", g.skip_threshold);
    numbers("score_power", g.score_power);
    numbers("soft_sigma", g.soft_sigma);
    numbers("soft_score_threshold", g.soft_score_threshold);
    if (j.contains("rescale")) {
      for (const auto& v : j.at("rescale")) {
        auto r = parse_rescale(v.get<std::string>());
        if (!r) throw ConfigError("rescale values are 'clamped' or 'unclamped'");
        g.rescale.push_back(*r);
      }
    }
    if (j.contains("weights"))
      g.weights = j.at("weights").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed grid: ") + e.what());
  }
  return g;
}

inline ParamGrid load_grid(const std::string& path) {
  const std::string text = detail::read_file(path);
  try {
    return parse_grid(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, 0, std::string("invalid JSON: ") + e.what());
  }
}

namespace detail {

template <typename T>
std::vector<T> sorted_unique(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

struct ResolvedGrid {
  std::vector<double> iou, skip, power, sigma, soft_thr;
  std::vector<RescaleVariant> rescale;
  std::vector<std::vector<double>> weights;

  std::size_t size() const {
    const std::size_t dims[] = {iou.size(),   skip.size(),     rescale.size(),
                                power.size(), sigma.size(),    soft_thr.size(),
                                weights.size()};
    std::size_t n = 1;
    for (std::size_t d : dims) {
      if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d)
        return std::numeric_limits<std::size_t>::max();
      n *= d;
    }
    return n;
  }
};

inline ResolvedGrid resolve(const ParamGrid& g, Method method,
                            std::size_t model_count) {
  const FusionParams def = default_params(method);
  auto or_default = [](const std::vector<double>& v, double d) {
    return v.empty() ? std::vector<double>{d} : sorted_unique(v);
  };
  ResolvedGrid r;
  r.iou = or_default(g.iou_threshold, def.iou_threshold);
  r.skip = or_default(g.skip_threshold, def.skip_threshold);
  r.power = or_default(g.score_power, def.score_power);
  r.sigma = or_default(g.soft_sigma, def.soft_sigma);
  r.soft_thr = or_default(g.soft_score_threshold, def.soft_score_threshold);
  r.rescale = g.rescale.empty() ? std::vector<RescaleVariant>{def.rescale}
                                : sorted_unique(g.rescale);
  r.weights = g.weights.empty()
                  ? std::vector<std::vector<double>>{std::vector<double>(
                        model_count, 1.0)}
                  : sorted_unique(g.weights);
  for (const auto& w : r.weights) {
    if (w.size() != model_count)
      throw ConfigError("weight vector of length " + std::to_string(w.size()) +
                        " for " + std::to_string(model_count) + " models");
    double sum = 0.0;
    for (double x : w) {
      if (!(x >= 0.0) || !std::isfinite(x))
        throw InvalidParameter("grid weights must be finite and >= 0");
      sum += x;
    }
    if (!(sum > 0.0))
      throw InvalidParameter("grid weight vector must not be all zero");
  }
  return r;
}

}  // namespace detail

inline std::size_t grid_size(const ParamGrid& g, Method method,
                             std::size_t model_count) {
  return detail::resolve(g, method, model_count).size();
}

// Cartesian product of the sorted, de-duplicated value lists. The last
// parameter listed (weights) varies fastest.
inline std::vector<GridPoint> enumerate_grid(const ParamGrid& g, Method method,
                                             std::size_t model_count) {
  const auto r = detail::resolve(g, method, model_count);
  std::vector<GridPoint> out;
  for (double iou : r.iou)
    for (double skip : r.skip)
      for (RescaleVariant rv : r.rescale)
        for (double power : r.power)
          for (double sigma : r.sigma)
            for (double soft_thr : r.soft_thr)
              for (const auto& w : r.weights) {
                GridPoint p;
                p.params.method = method;
                p.params.iou_threshold = iou;
                p.params.skip_threshold = skip;
                p.params.rescale = rv;
                p.params.score_power = power;
                p.params.soft_sigma = sigma;
                p.params.soft_score_threshold = soft_thr;
                validate(p.params);
                p.weights = w;
                out.push_back(std::move(p));
              }
  return out;
}

// fuse + mean_ap for one grid point.
template <std::size_t D>
double evaluate_point(std::span<const DetectionGroups<D>> per_model,
                      std::span<const GroundTruthBox<D>> gts,
                      const GridPoint& point,
                      std::span<const double> thresholds) {
  const auto images =
      assemble(per_model, std::span<const double>(point.weights));
  const auto fused = fuse_images(images, point.params, 1);
  return mean_ap(std::span<const DetectionRecord<D>>(fused), gts, thresholds)
      .map;
}

// Exhaustive grid search. Every point is evaluated independently; the best
// point is the first maximum in enumeration order.
template <std::size_t D>
TuneResult grid_search(std::span<const DetectionGroups<D>> per_model,
                       std::span<const GroundTruthBox<D>> gts, Method method,
                       const ParamGrid& grid,
                       std::span<const double> thresholds,
                       const TuneOptions& options = {}) {
  check_thresholds(thresholds);
  const std::size_t size = grid_size(grid, method, per_model.size());
  if (size > options.cap) throw GridTooLarge(size, options.cap);
  const auto points = enumerate_grid(grid, method, per_model.size());

  std::vector<double> scores(points.size());
  parallel_for(points.size(), options.workers, [&](std::size_t i) {
    scores[i] = evaluate_point(per_model, gts, points[i], thresholds);
  });

  TuneResult result;
  std::size_t best = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    result.table.push_back({points[i], scores[i]});
    if (scores[i] > scores[best]) best = i;
  }
  result.best = points[best];
  result.best_map = scores[best];
  return result;
}

template <std::size_t D>
TuneResult grid_search(const std::vector<DetectionGroups<D>>& per_model,
                       const std::vector<GroundTruthBox<D>>& gts, Method method,
                       const ParamGrid& grid,
                       const std::vector<double>& thresholds,
                       const TuneOptions& options = {}) {
  return grid_search(std::span<const DetectionGroups<D>>(per_model),
                     std::span<const GroundTruthBox<D>>(gts), method, grid,
                     std::span<const double>(thresholds), options);
}

}  // namespace boxfusion
