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
// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "boxfusion.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace {

using namespace boxfusion;
using boxfusion::testing::canonical;
using boxfusion::testing::first_mismatch;

struct Outcome {
  bool pass = true;
  std::string detail;
};

Outcome fail(std::string why) { return {false, std::move(why)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// WBF against the step-by-step reference.
template <std::size_t D>
Outcome wbf_oracle(std::uint64_t seed, int instances, double budget) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const auto ps = boxfusion::testing::random_instance<D>(rng);
    const auto params = boxfusion::testing::random_params<D>(rng, Method::wbf);
    auto got = wbf_clusters(ps, params);
    auto want = oracle::wbf(ps, params);
    if (got.size() != want.size())
      return fail("instance " + std::to_string(t) + ": " + std::to_string(got.size()) +
                  " clusters vs " + std::to_string(want.size()));
    std::sort(got.begin(), got.end(), [](const auto& a, const auto& b) {
      return std::pair(a.fused.label, a.sources.front()) <
             std::pair(b.fused.label, b.sources.front());
    });
    std::sort(want.begin(), want.end(), [](const auto& a, const auto& b) {
      return std::pair(a.label, a.members.front()) < std::pair(b.label, b.members.front());
    });
    for (std::size_t i = 0; i < got.size(); ++i) {
      if (got[i].fused.label != want[i].label || got[i].sources != want[i].members)
        return fail("instance " + std::to_string(t) + ": membership differs");
      worst = std::max(worst, std::abs(got[i].fused.score - want[i].score));
      for (std::size_t k = 0; k < D; ++k) {
        worst = std::max(worst, std::abs(got[i].fused.box.lo[k] - want[i].box.lo[k]));
        worst = std::max(worst, std::abs(got[i].fused.box.hi[k] - want[i].box.hi[k]));
      }
    }
  }
  const double secs = seconds_since(t0);
  std::string detail = std::to_string(instances) + " instances, max deviation " +
                       fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s";
  if (!(worst <= 1e-9)) return fail(detail);
  if (!(secs < budget)) return fail(detail + " over " + fmt("%.0f", budget) + " s");
  return {true, detail};
}

Outcome nms_oracle() {
  std::mt19937_64 rng(2);
  const int instances = 1000;
  for (int t = 0; t < instances; ++t) {
    const auto ps = boxfusion::testing::random_instance<2>(rng);
    const auto params = boxfusion::testing::random_params<2>(rng, Method::nms);
    if (canonical(nms(ps, params)) != canonical(oracle::nms(ps, params)))
      return fail("instance " + std::to_string(t) + " differs");
  }
  return {true, std::to_string(instances) + " instances, exact"};
}

double top_box_iou(const std::vector<ScoredBox<2>>& out, const Box2D& gt) {
  // outputs are sorted by score; an empty output scores 0
  return out.empty() ? 0.0 : iou2d(out.front().box, gt);
}

Outcome jittered_ensemble_effect() {
  const auto t0 = std::chrono::steady_clock::now();
  const int seeds = 20, scenes = 500, models = 5;
  const FusionParams wbf_p = default_params(Method::wbf);
  const FusionParams nms_p = default_params(Method::nms);
  int wins = 0;
  std::vector<DetectionRecord<2>> pooled_wbf, pooled_nms;
  std::vector<GroundTruthBox<2>> pooled_gt;
  double sum_wbf = 0.0, sum_nms = 0.0;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(1000 + s);
    std::uniform_real_distribution<double> extent(0.2, 0.5), unit(0.0, 1.0),
        score(0.5, 1.0);
    std::normal_distribution<double> noise(0.0, 0.05);
    double iou_wbf = 0.0, iou_nms = 0.0;
    for (int k = 0; k < scenes; ++k) {
      const double w = extent(rng), h = extent(rng);
      const double x = unit(rng) * (1.0 - w), y = unit(rng) * (1.0 - h);
      const Box2D gt = make_box2d(x, y, x + w, y + h);
      PredictionSet<2> ps;
      ps.per_model.resize(models);
      ps.model_weights.assign(models, 1.0);
      for (int m = 0; m < models; ++m) {
        Box2D b = gt;
        for (std::size_t d = 0; d < 2; ++d) {
          b.lo[d] += noise(rng);
          b.hi[d] += noise(rng);
        }
        ps.per_model[m].push_back({clip(b), 0, score(rng), static_cast<std::size_t>(m)});
      }
      const auto fw = wbf(ps, wbf_p);
      const auto fn = nms(ps, nms_p);
      iou_wbf += top_box_iou(fw, gt);
      iou_nms += top_box_iou(fn, gt);
      const std::string id = std::to_string(s) + "/" + std::to_string(k);
      pooled_gt.push_back({gt, 0, id});
      for (const auto& b : fw) pooled_wbf.push_back(to_record(id, b));
      for (const auto& b : fn) pooled_nms.push_back(to_record(id, b));
    }
    if (iou_wbf > iou_nms) ++wins;
    sum_wbf += iou_wbf / scenes;
    sum_nms += iou_nms / scenes;
  }
  const auto thr = default_thresholds();
  const double map_wbf = mean_ap(pooled_wbf, pooled_gt, thr).map;
  const double map_nms = mean_ap(pooled_nms, pooled_gt, thr).map;
  const double secs = seconds_since(t0);
  const std::string detail =
      "WBF ahead in " + std::to_string(wins) + "/" + std::to_string(seeds) +
      " seeds, mean IoU " + fmt("%.4f", sum_wbf / seeds) + " vs " +
      fmt("%.4f", sum_nms / seeds) + ", pooled mAP " + fmt("%.4f", map_wbf) + " vs " +
      fmt("%.4f", map_nms) + ", " + fmt("%.2f", secs) + " s";
  const bool ok = wins * 100 >= 95 * seeds && map_wbf > map_nms && secs < 30.0;
  return {ok, detail};
}

Outcome rescale_consistency() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> score(0.05, 0.1);
  std::normal_distribution<double> tiny(0.0, 1e-3);
  int checked = 0;
  double worst_agree = 0.0;
  for (std::size_t n = 1; n <= 8; ++n) {
    for (std::size_t t = 1; t <= 8; ++t) {
      for (int rep = 0; rep < 25; ++rep) {
        const Box2D base = boxfusion::testing::random_box<2>(rng, 0.2, 0.5);
        PredictionSet<2> ps;
        ps.per_model.resize(n);
        ps.model_weights.assign(n, 1.0);
        for (std::size_t i = 0; i < t; ++i) {
          Box2D b = base;
          for (std::size_t d = 0; d < 2; ++d) {
            b.lo[d] += tiny(rng);
            b.hi[d] += tiny(rng);
          }
          ps.per_model[i % n].push_back({b, 0, score(rng), i % n});
        }
        FusionParams p;
        p.rescale = RescaleVariant::clamped;
        const auto a = wbf_clusters(ps, p);
        p.rescale = RescaleVariant::unclamped;
        const auto b = wbf_clusters(ps, p);
        if (a.size() != 1 || b.size() != 1 || a[0].members.size() != t)
          return fail("T=" + std::to_string(t) + " N=" + std::to_string(n) +
                      ": boxes did not form one cluster");
        const double c = a[0].fused.score, u = b[0].fused.score;
        if (t <= n) {
          worst_agree = std::max(worst_agree, std::abs(c - u));
          if (!(std::abs(c - u) <= 1e-12))
            return fail("T=" + std::to_string(t) + " N=" + std::to_string(n) +
                        ": variants differ by " + fmt("%.3g", std::abs(c - u)));
        } else if (!(u > c)) {
          return fail("T=" + std::to_string(t) + " N=" + std::to_string(n) +
                      ": unclamped " + fmt("%.6f", u) + " not above clamped " +
                      fmt("%.6f", c));
        }
        ++checked;
      }
    }
  }
  return {true, std::to_string(checked) + " clusters over T,N in 1..8, max T<=N gap " +
                    fmt("%.3g", worst_agree)};
}

Outcome metric_sanity() {
  std::mt19937_64 rng(5);
  std::vector<DetectionRecord<2>> preds;
  std::vector<GroundTruthBox<2>> gts;
  boxfusion::testing::random_dataset<2>(rng, 50, 5, preds, gts);
  std::vector<DetectionRecord<2>> as_preds;
  for (const auto& g : gts) as_preds.push_back({g.image, g.box, g.label, 1.0});
  const auto thr = default_thresholds();
  const double perfect = mean_ap(as_preds, gts, thr).map;
  const double empty = mean_ap(std::vector<DetectionRecord<2>>{}, gts, thr).map;
  const std::vector<ScoredBox<2>> p{{make_box2d(0, 0, 1, 0.6), 0, 0.9, 0}};
  const std::vector<GroundTruthBox<2>> g{{make_box2d(0, 0, 1, 1), 0, "img"}};
  const double fixture = average_precision(p, g, thr);
  const std::string detail = "GT as predictions " + fmt("%.17g", perfect) + ", empty " +
                             fmt("%.17g", empty) + ", IoU-0.6 fixture " +
                             fmt("%.17g", fixture);
  return {perfect == 1.0 && empty == 0.0 && std::abs(fixture - 0.2) <= 1e-12, detail};
}

Outcome evaluation_oracle() {
  std::mt19937_64 rng(6);
  double worst = 0.0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    std::vector<DetectionRecord<2>> preds;
    std::vector<GroundTruthBox<2>> gts;
    boxfusion::testing::random_dataset<2>(rng, 50, 5, preds, gts);
    const auto thr = default_thresholds();
    const auto fast = mean_ap(preds, gts, thr);
    const auto slow = oracle::evaluate(preds, gts, thr);
    worst = std::max(worst, std::abs(fast.map - slow.map));
    if (fast.classes.size() != slow.ap.size()) return fail("class sets differ");
    for (const auto& c : fast.classes)
      worst = std::max(worst, std::abs(c.ap - slow.ap.at(c.label)));
  }
  const std::string detail = std::to_string(trials) +
                             " datasets of 50 images, 5 classes, max deviation " +
                             fmt("%.3g", worst);
  return {worst <= 1e-9, detail};
}

Outcome performance() {
  const auto t0 = std::chrono::steady_clock::now();
  WorkloadSpec spec;  // 1000 boxes/image/model, 10 classes, 3 models, 100 images
  const auto w = generate_workload<2>(spec);
  const auto rows = run_bench(w, 3);
  const double secs = seconds_since(t0);
  double ratio = -1.0, t_wbf = 0.0, t_nms = 0.0;
  for (const auto& r : rows) {
    if (r.method == Method::wbf) {
      ratio = r.ratio_to_nms;
      t_wbf = r.seconds;
    }
    if (r.method == Method::nms) t_nms = r.seconds;
  }
  const std::string detail = "WBF " + fmt("%.3f", t_wbf) + " s, NMS " + fmt("%.3f", t_nms) +
                             " s, ratio " + fmt("%.2f", ratio) + ", total " +
                             fmt("%.2f", secs) + " s";
  return {ratio >= 0.0 && ratio <= 5.0 && secs < 60.0, detail};
}

// One randomized instance through every invariance property. Returns an
// empty string when all hold.
template <std::size_t D>
std::string invariance_trial(std::mt19937_64& rng) {
  const auto ps = boxfusion::testing::random_instance<D>(rng);
  std::vector<FusionParams> params;
  for (Method m : kAllMethods)
    params.push_back(boxfusion::testing::random_params<D>(rng, m));

  // permutation of boxes within models and of the models themselves
  std::vector<std::size_t> order(ps.model_count());
  for (std::size_t m = 0; m < order.size(); ++m) order[m] = m;
  std::shuffle(order.begin(), order.end(), rng);
  PredictionSet<D> shuffled;
  for (std::size_t m : order) {
    auto list = ps.per_model[m];
    std::shuffle(list.begin(), list.end(), rng);
    for (auto& b : list) b.model = shuffled.per_model.size();
    shuffled.per_model.push_back(list);
    shuffled.model_weights.push_back(ps.model_weights[m]);
  }

  std::uniform_real_distribution<double> scale(0.5, 2.0), shift(-1.0, 1.0);
  const double s = scale(rng);
  std::array<double, D> off{};
  for (auto& o : off) o = shift(rng);
  auto map_box = [&](AxisBox<D> b) {
    for (std::size_t k = 0; k < D; ++k) {
      b.lo[k] = s * b.lo[k] + off[k];
      b.hi[k] = s * b.hi[k] + off[k];
    }
    return b;
  };
  PredictionSet<D> moved = ps;
  for (auto& list : moved.per_model)
    for (auto& b : list) b.box = map_box(b.box);

  for (const auto& p : params) {
    const std::string name(method_name(p.method));
    const auto base = fuse(ps, p);
    if (auto d = first_mismatch(canonical(base), canonical(fuse(shuffled, p)), 1e-9);
        !d.empty())
      return "permutation (" + name + "): " + d;

    auto expected = base;
    for (auto& b : expected) b.box = map_box(b.box);
    if (auto d = first_mismatch(canonical(expected), canonical(fuse(moved, p)), 1e-9);
        !d.empty())
      return "similarity (" + name + "): " + d;

    std::vector<ScoredBox<D>> separate;
    for (int label : oracle::labels_of(ps)) {
      PredictionSet<D> only = ps;
      for (auto& list : only.per_model)
        std::erase_if(list, [&](const ScoredBox<D>& b) { return b.label != label; });
      const auto part = fuse(only, p);
      separate.insert(separate.end(), part.begin(), part.end());
    }
    if (auto d = first_mismatch(canonical(base), canonical(separate), 0.0); !d.empty())
      return "label separation (" + name + "): " + d;
  }

  auto contained = [](const Cluster<D>& cl) {
    for (std::size_t k = 0; k < D; ++k) {
      double lo_min = 1e300, lo_max = -1e300, hi_min = 1e300, hi_max = -1e300;
      for (const auto& m : cl.members) {
        lo_min = std::min(lo_min, m.box.lo[k]);
        lo_max = std::max(lo_max, m.box.lo[k]);
        hi_min = std::min(hi_min, m.box.hi[k]);
        hi_max = std::max(hi_max, m.box.hi[k]);
      }
      const auto& f = cl.fused.box;
      if (f.lo[k] < lo_min || f.lo[k] > lo_max || f.hi[k] < hi_min || f.hi[k] > hi_max)
        return false;
    }
    return true;
  };
  for (const auto& cl : wbf_clusters(ps, params[0]))
    if (!contained(cl)) return "envelope (wbf): " + to_string(cl.fused.box);
  for (const auto& cl : nmw_clusters(ps, params[4]))
    if (!contained(cl)) return "envelope (nmw): " + to_string(cl.fused.box);
  return {};
}

template <std::size_t D>
Outcome invariance_suite(std::uint64_t seed, int trials) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    const std::string d = invariance_trial<D>(rng);
    if (!d.empty()) return fail("trial " + std::to_string(t) + ": " + d);
  }
  return {true, std::to_string(trials) + " trials, " + fmt("%.2f", seconds_since(t0)) + " s"};
}

Outcome three_d_parity() {
  const Outcome oracle = wbf_oracle<3>(9, 1000, 10.0);
  const Outcome inv = invariance_suite<3>(99, 10000);
  const std::string detail = "oracle: " + oracle.detail + "; invariance: " + inv.detail;
  return {oracle.pass && inv.pass, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"WBF oracle equivalence", [] { return wbf_oracle<2>(1, 1000, 10.0); }},
      {"NMS oracle equivalence", nms_oracle},
      {"WBF beats NMS on jittered ensembles", jittered_ensemble_effect},
      {"Rescale variants consistency", rescale_consistency},
      {"Metric sanity", metric_sanity},
      {"Evaluation oracle", evaluation_oracle},
      {"Performance envelope", performance},
      {"Invariance suite", [] { return invariance_suite<2>(8, 10000); }},
      {"3D parity", three_d_parity},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    if (!o.pass) ++failures;
    std::printf("[%s] %s (%s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
