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
#include <charconv>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "boxfusion/detection.hpp"
#include "boxfusion/errors.hpp"
#include "boxfusion/geometry.hpp"
#include "boxfusion/parallel.hpp"

namespace boxfusion {

struct MatchCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  MatchCounts& operator+=(const MatchCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const MatchCounts&, const MatchCounts&) = default;
};

// TP / (TP + FP + FN); zero when nothing was predicted or expected.
inline double precision_at(const MatchCounts& c) {
  const std::size_t den = c.tp + c.fp + c.fn;
  return den == 0 ? 0.0
                  : static_cast<double>(c.tp) / static_cast<double>(den);
}

// 0.50, 0.55, ..., 0.95.
inline std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back((50.0 + 5.0 * k) / 100.0);
  return t;
}

inline void check_thresholds(std::span<const double> thresholds) {
  if (thresholds.empty())
    throw InvalidParameter("threshold list must not be empty");
  for (double t : thresholds)
    if (!(t > 0.0 && t < 1.0))
      throw InvalidParameter("IoU thresholds must be in (0,1), got " +
                             std::to_string(t));
}

// Parses "start:stop:step" (both ends inclusive when the step lands on
// stop), a comma list "0.5,0.75", or a single value.
inline std::vector<double> parse_thresholds(std::string_view text) {
  auto number = [&](std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
      throw InvalidParameter("bad threshold value '" + std::string(s) + "'");
    return v;
  };
  auto tidy = [](double v) { return std::round(v * 1e12) / 1e12; };
  std::vector<double> out;
  if (text.find(':') != std::string_view::npos) {
    const auto c1 = text.find(':');
    const auto c2 = text.find(':', c1 + 1);
    if (c2 == std::string_view::npos ||
        text.find(':', c2 + 1) != std::string_view::npos)
      throw InvalidParameter("threshold range must be start:stop:step");
    const double start = number(text.substr(0, c1));
    const double stop = number(text.substr(c1 + 1, c2 - c1 - 1));
    const double step = number(text.substr(c2 + 1));
    if (!(step > 0.0) || stop < start)
      throw InvalidParameter("threshold range needs step > 0 and stop >= start");
    const double span = (stop - start) / step;
    const auto n = static_cast<long>(std::floor(span + 1e-9));
    if (n > 100000) throw InvalidParameter("threshold range is too long");
    for (long k = 0; k <= n; ++k) out.push_back(tidy(start + step * k));
  } else {
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto comma = text.find(',', pos);
      const auto end = comma == std::string_view::npos ? text.size() : comma;
      out.push_back(tidy(number(text.substr(pos, end - pos))));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
  }
  check_thresholds(out);
  return out;
}

namespace detail {

// Predictions of one (image, label) group, visited in score order, against
// that group's ground truth. The IoU matrix is computed once and reused for
// every threshold.
class MatchTable {
 public:
  template <std::size_t D>
  MatchTable(std::span<const ScoredBox<D>* const> preds,
             std::span<const AxisBox<D>* const> gts)
      : rows_(preds.size()), cols_(gts.size()), iou_(rows_ * cols_) {
    std::vector<std::size_t> order(rows_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return preds[a]->score > preds[b]->score;
                     });
    std::vector<double> gt_vol(cols_);
    for (std::size_t g = 0; g < cols_; ++g) gt_vol[g] = volume(*gts[g]);
    for (std::size_t r = 0; r < rows_; ++r) {
      const auto& p = preds[order[r]]->box;
      const double pv = volume(p);
      for (std::size_t g = 0; g < cols_; ++g)
        iou_[r * cols_ + g] = iou_with_volumes(p, pv, *gts[g], gt_vol[g]);
    }
  }

  MatchCounts counts(double t) const {
    std::vector<char> taken(cols_, 0);
    MatchCounts c;
    for (std::size_t r = 0; r < rows_; ++r) {
      std::size_t best = cols_;
      double best_iou = t;
      for (std::size_t g = 0; g < cols_; ++g) {
        const double v = iou_[r * cols_ + g];
        if (!taken[g] && v > best_iou) {
          best_iou = v;
          best = g;
        }
      }
      if (best == cols_) {
        ++c.fp;
      } else {
        taken[best] = 1;
        ++c.tp;
      }
    }
    c.fn = cols_ - c.tp;
    return c;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> iou_;
};

template <std::size_t D>
MatchTable make_table(std::span<const ScoredBox<D>> preds,
                      std::span<const GroundTruthBox<D>> gts) {
  std::vector<const ScoredBox<D>*> p;
  std::vector<const AxisBox<D>*> g;
  for (const auto& x : preds) p.push_back(&x);
  for (const auto& x : gts) g.push_back(&x.box);
  return MatchTable(std::span<const ScoredBox<D>* const>(p),
                    std::span<const AxisBox<D>* const>(g));
}

template <std::size_t D>
void check_single_label(std::span<const ScoredBox<D>> preds,
                        std::span<const GroundTruthBox<D>> gts) {
  std::set<int> labels;
  for (const auto& p : preds) labels.insert(p.label);
  for (const auto& g : gts) labels.insert(g.label);
  if (labels.size() > 1)
    throw ContractViolation("matching expects boxes of a single label");
}

}  // namespace detail

// Greedy one-to-one matching for a single image and label: predictions in
// descending score order (ties by input order) each take the unmatched
// ground truth with the highest IoU, provided IoU > t.
template <std::size_t D>
MatchCounts match_at_threshold(std::span<const ScoredBox<D>> preds,
                               std::span<const GroundTruthBox<D>> gts,
                               double t) {
  detail::check_single_label(preds, gts);
  return detail::make_table(preds, gts).counts(t);
}

template <std::size_t D>
MatchCounts match_at_threshold(const std::vector<ScoredBox<D>>& preds,
                               const std::vector<GroundTruthBox<D>>& gts,
                               double t) {
  return match_at_threshold(std::span<const ScoredBox<D>>(preds),
                            std::span<const GroundTruthBox<D>>(gts), t);
}

// Mean of precision_at over the threshold list for one image and label.
template <std::size_t D>
double average_precision(std::span<const ScoredBox<D>> preds,
                         std::span<const GroundTruthBox<D>> gts,
                         std::span<const double> thresholds) {
  check_thresholds(thresholds);
  detail::check_single_label(preds, gts);
  const auto table = detail::make_table(preds, gts);
  double sum = 0.0;
  for (double t : thresholds) sum += precision_at(table.counts(t));
  return sum / static_cast<double>(thresholds.size());
}

template <std::size_t D>
double average_precision(const std::vector<ScoredBox<D>>& preds,
                         const std::vector<GroundTruthBox<D>>& gts,
                         const std::vector<double>& thresholds) {
  return average_precision(std::span<const ScoredBox<D>>(preds),
                           std::span<const GroundTruthBox<D>>(gts),
                           std::span<const double>(thresholds));
}

struct ClassReport {
  int label = 0;
  std::size_t gt_count = 0;
  std::size_t pred_count = 0;
  std::vector<MatchCounts> counts;  // one per threshold
  std::vector<double> precision;    // one per threshold
  double ap = 0.0;
};

struct EvalReport {
  std::vector<double> thresholds;
  // Classes present in the ground truth, ascending by label.
  std::vector<ClassReport> classes;
  // Classes that only appear in predictions; all of their boxes are FPs.
  std::vector<ClassReport> prediction_only;
  double map = 0.0;
};

// Dataset-level mAP: counts are summed over images per class before the
// precision is formed, AP is the mean over thresholds, and mAP the mean over
// classes that occur in the ground truth.
template <std::size_t D>
EvalReport mean_ap(std::span<const DetectionRecord<D>> preds,
                   std::span<const GroundTruthBox<D>> gts,
                   std::span<const double> thresholds,
                   std::size_t workers = 1) {
  check_thresholds(thresholds);
  using Key = std::pair<int, std::string_view>;
  struct Group {
    std::vector<const ScoredBox<D>*> preds;
    std::vector<const AxisBox<D>*> gts;
  };
  std::vector<ScoredBox<D>> scored;
  scored.reserve(preds.size());
  for (const auto& r : preds) scored.push_back(to_scored(r));

  std::map<Key, Group> groups;
  for (std::size_t i = 0; i < preds.size(); ++i)
    groups[{preds[i].label, preds[i].image}].preds.push_back(&scored[i]);
  for (const auto& g : gts) groups[{g.label, g.image}].gts.push_back(&g.box);

  std::vector<Group*> order;
  for (auto& [key, g] : groups) order.push_back(&g);
  std::vector<std::vector<MatchCounts>> per_group(order.size());
  parallel_for(order.size(), workers, [&](std::size_t i) {
    const Group& g = *order[i];
    const detail::MatchTable table(
        std::span<const ScoredBox<D>* const>(g.preds),
        std::span<const AxisBox<D>* const>(g.gts));
    per_group[i].reserve(thresholds.size());
    for (double t : thresholds) per_group[i].push_back(table.counts(t));
  });

  std::map<int, ClassReport> by_label;
  std::size_t gi = 0;
  for (const auto& [key, g] : groups) {
    ClassReport& cr = by_label[key.first];
    cr.label = key.first;
    cr.gt_count += g.gts.size();
    cr.pred_count += g.preds.size();
    if (cr.counts.empty()) cr.counts.resize(thresholds.size());
    for (std::size_t t = 0; t < thresholds.size(); ++t)
      cr.counts[t] += per_group[gi][t];
    ++gi;
  }

  EvalReport report;
  report.thresholds.assign(thresholds.begin(), thresholds.end());
  double sum_ap = 0.0;
  for (auto& [label, cr] : by_label) {
    double sum = 0.0;
    for (const auto& c : cr.counts) {
      cr.precision.push_back(precision_at(c));
      sum += cr.precision.back();
    }
    cr.ap = sum / static_cast<double>(thresholds.size());
    if (cr.gt_count > 0) {
      sum_ap += cr.ap;
      report.classes.push_back(std::move(cr));
    } else {
      report.prediction_only.push_back(std::move(cr));
    }
  }
  if (!report.classes.empty())
    report.map = sum_ap / static_cast<double>(report.classes.size());
  return report;
}

template <std::size_t D>
EvalReport mean_ap(const std::vector<DetectionRecord<D>>& preds,
                   const std::vector<GroundTruthBox<D>>& gts,
                   const std::vector<double>& thresholds,
                   std::size_t workers = 1) {
  return mean_ap(std::span<const DetectionRecord<D>>(preds),
                 std::span<const GroundTruthBox<D>>(gts),
                 std::span<const double>(thresholds), workers);
}

}  // namespace boxfusion
