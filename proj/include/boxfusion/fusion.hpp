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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "boxfusion/detection.hpp"
#include "boxfusion/errors.hpp"
#include "boxfusion/geometry.hpp"
#include "boxfusion/parallel.hpp"

namespace boxfusion {

// Predictions of N models for one image, plus one weight per model.
template <std::size_t D>
struct PredictionSet {
  std::vector<std::vector<ScoredBox<D>>> per_model;
  std::vector<double> model_weights;

  std::size_t model_count() const { return per_model.size(); }
};

enum class Method { wbf, nms, soft_nms_linear, soft_nms_gaussian, nmw };

// How the fused WBF score is scaled by cluster size T against the model
// count N: clamped uses min(T, N) / N, unclamped uses T / N.
enum class RescaleVariant { clamped, unclamped };

inline constexpr std::array<Method, 5> kAllMethods = {
    Method::wbf, Method::nms, Method::soft_nms_linear,
    Method::soft_nms_gaussian, Method::nmw};

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::wbf:
      return "wbf";
    case Method::nms:
      return "nms";
    case Method::soft_nms_linear:
      return "soft-nms-linear";
    case Method::soft_nms_gaussian:
      return "soft-nms-gaussian";
    case Method::nmw:
      return "nmw";
  }
  return "unknown";
}

inline std::optional<Method> parse_method(std::string_view name) {
  for (Method m : kAllMethods)
    if (method_name(m) == name) return m;
  return std::nullopt;
}

inline std::string method_list() {
  std::string s;
  for (Method m : kAllMethods) {
    if (!s.empty()) s += ", ";
    s += method_name(m);
  }
  return s;
}

inline std::string_view rescale_name(RescaleVariant v) {
  return v == RescaleVariant::clamped ? "clamped" : "unclamped";
}

inline std::optional<RescaleVariant> parse_rescale(std::string_view name) {
  if (name == "clamped") return RescaleVariant::clamped;
  if (name == "unclamped") return RescaleVariant::unclamped;
  return std::nullopt;
}

struct FusionParams {
  Method method = Method::wbf;
  double iou_threshold = 0.55;
  // Boxes whose weighted score is below this value are dropped up front.
  double skip_threshold = 0.0;
  RescaleVariant rescale = RescaleVariant::clamped;
  // Coordinate weights are score^power; the fused score stays a plain mean.
  double score_power = 1.0;
  double soft_sigma = 0.5;
  // Soft-NMS drops boxes whose decayed score falls below this.
  double soft_score_threshold = 1e-3;

  friend bool operator==(const FusionParams&, const FusionParams&) = default;
};

// Toolkit defaults: IoU 0.55 for WBF, 0.5 for the suppression baselines.
inline FusionParams default_params(Method m) {
  FusionParams p;
  p.method = m;
  p.iou_threshold = (m == Method::wbf) ? 0.55 : 0.5;
  return p;
}

inline void validate(const FusionParams& p) {
  if (!(p.iou_threshold > 0.0 && p.iou_threshold < 1.0))
    throw InvalidParameter("iou_threshold must be in (0,1), got " +
                           std::to_string(p.iou_threshold));
  if (!(p.skip_threshold >= 0.0 && p.skip_threshold < 1.0))
    throw InvalidParameter("skip_threshold must be in [0,1), got " +
                           std::to_string(p.skip_threshold));
  if (!(p.score_power > 0.0) || !std::isfinite(p.score_power))
    throw InvalidParameter("score_power must be > 0, got " +
                           std::to_string(p.score_power));
  if (!(p.soft_sigma > 0.0) || !std::isfinite(p.soft_sigma))
    throw InvalidParameter("soft_sigma must be > 0, got " +
                           std::to_string(p.soft_sigma));
  if (!(p.soft_score_threshold >= 0.0) || !std::isfinite(p.soft_score_threshold))
    throw InvalidParameter("soft_score_threshold must be >= 0, got " +
                           std::to_string(p.soft_score_threshold));
}

// Position of an input box inside a PredictionSet.
struct BoxRef {
  std::size_t model = 0;
  std::size_t position = 0;

  friend auto operator<=>(const BoxRef&, const BoxRef&) = default;
};

// One WBF or NMW cluster. Member scores are weighted (score * model
// weight); `mean_score` is the fused score before count rescaling.
template <std::size_t D>
struct Cluster {
  std::vector<ScoredBox<D>> members;
  std::vector<BoxRef> sources;
  ScoredBox<D> fused;
  double mean_score = 0.0;
};

namespace detail {

template <std::size_t D>
struct Candidate {
  ScoredBox<D> box;  // score already multiplied by the model weight
  BoxRef ref;
  double vol = 0.0;
};

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

inline double total_weight(std::span<const double> weights) {
  double w = 0.0;
  for (double x : weights) w += x;
  return w;
}

template <std::size_t D>
void check_prediction_set(const PredictionSet<D>& preds) {
  if (preds.model_weights.size() != preds.model_count())
    throw ContractViolation(
        "model_weights has " + std::to_string(preds.model_weights.size()) +
        " entries for " + std::to_string(preds.model_count()) + " models");
  for (double w : preds.model_weights)
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ContractViolation("model weights must be finite and >= 0");
  if (preds.model_count() > 0 && !(total_weight(preds.model_weights) > 0.0))
    throw ContractViolation("model weights must not all be zero");
}

// Weighted, skip-filtered candidates grouped by label, each group sorted by
// weighted score descending with ties broken by (model, position).
// Boxes from zero-weight models never participate.
template <std::size_t D>
std::map<int, std::vector<Candidate<D>>> collect_candidates(
    const PredictionSet<D>& preds, const FusionParams& params) {
  check_prediction_set(preds);
  std::map<int, std::vector<Candidate<D>>> groups;
  for (std::size_t m = 0; m < preds.model_count(); ++m) {
    const double w = preds.model_weights[m];
    const auto& list = preds.per_model[m];
    for (std::size_t i = 0; i < list.size(); ++i) {
      const ScoredBox<D>& in = list[i];
      if (!is_finite(in.box))
        throw InvalidInput("box has a non-finite coordinate");
      if (!(in.score >= 0.0 && in.score <= 1.0))
        throw InvalidInput("score must be in [0,1], got " +
                           std::to_string(in.score));
      if (in.label < 0) throw InvalidInput("label must be non-negative");
      if (w == 0.0) continue;
      const double eff = in.score * w;
      if (eff < params.skip_threshold) continue;
      Candidate<D> c;
      c.box = in;
      c.box.score = eff;
      c.box.model = m;
      c.ref = BoxRef{m, i};
      c.vol = volume(in.box);
      groups[in.label].push_back(c);
    }
  }
  for (auto& [label, group] : groups) {
    std::sort(group.begin(), group.end(),
              [](const Candidate<D>& a, const Candidate<D>& b) {
                if (a.box.score != b.box.score) return a.box.score > b.box.score;
                return a.ref < b.ref;
              });
  }
  return groups;
}

template <std::size_t D>
void sort_by_score(std::vector<ScoredBox<D>>& out) {
  std::stable_sort(out.begin(), out.end(),
                   [](const ScoredBox<D>& a, const ScoredBox<D>& b) {
                     return a.score > b.score;
                   });
}

// Weighted mean of member coordinates, kept inside the member envelope.
// Falls back to the unweighted mean when every weight is zero.
template <std::size_t D, typename WeightFn>
AxisBox<D> weighted_mean_box(std::span<const ScoredBox<D>> members,
                             WeightFn&& weight_of) {
  AxisBox<D> lo_env = members.front().box;
  AxisBox<D> hi_env = members.front().box;
  std::array<double, D> sum_lo{}, sum_hi{};
  double sum_w = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto& b = members[i].box;
    const double w = weight_of(i);
    sum_w += w;
    for (std::size_t k = 0; k < D; ++k) {
      sum_lo[k] += w * b.lo[k];
      sum_hi[k] += w * b.hi[k];
      lo_env.lo[k] = std::min(lo_env.lo[k], b.lo[k]);
      hi_env.lo[k] = std::max(hi_env.lo[k], b.lo[k]);
      lo_env.hi[k] = std::min(lo_env.hi[k], b.hi[k]);
      hi_env.hi[k] = std::max(hi_env.hi[k], b.hi[k]);
    }
  }
  AxisBox<D> out;
  const bool uniform = !(sum_w > 0.0);
  if (uniform) {
    sum_lo = {};
    sum_hi = {};
    for (const auto& m : members)
      for (std::size_t k = 0; k < D; ++k) {
        sum_lo[k] += m.box.lo[k];
        sum_hi[k] += m.box.hi[k];
      }
    sum_w = static_cast<double>(members.size());
  }
  for (std::size_t k = 0; k < D; ++k) {
    out.lo[k] = std::clamp(sum_lo[k] / sum_w, lo_env.lo[k], hi_env.lo[k]);
    out.hi[k] = std::clamp(sum_hi[k] / sum_w, lo_env.hi[k], hi_env.hi[k]);
  }
  return out;
}

}  // namespace detail

// Fuses one cluster: the score is the mean member score and each coordinate
// is the score^power weighted mean of the member coordinates.
template <std::size_t D>
ScoredBox<D> fuse_cluster(std::span<const ScoredBox<D>> members,
                          double score_power = 1.0) {
  if (members.empty())
    throw ContractViolation("fuse_cluster needs at least one member");
  if (!(score_power > 0.0))
    throw InvalidParameter("score_power must be > 0");
  const int label = members.front().label;
  double sum_score = 0.0;
  double lo_score = members.front().score;
  double hi_score = members.front().score;
  for (const auto& m : members) {
    if (m.label != label)
      throw ContractViolation("fuse_cluster members have different labels");
    sum_score += m.score;
    lo_score = std::min(lo_score, m.score);
    hi_score = std::max(hi_score, m.score);
  }
  ScoredBox<D> fused;
  fused.label = label;
  fused.model = members.front().model;
  fused.score = std::clamp(sum_score / static_cast<double>(members.size()),
                           lo_score, hi_score);
  if (score_power == 1.0) {
    fused.box = detail::weighted_mean_box<D>(
        members, [&](std::size_t i) { return members[i].score; });
  } else {
    fused.box = detail::weighted_mean_box<D>(members, [&](std::size_t i) {
      return std::pow(members[i].score, score_power);
    });
  }
  return fused;
}

template <std::size_t D>
ScoredBox<D> fuse_cluster(const std::vector<ScoredBox<D>>& members,
                          double score_power = 1.0) {
  return fuse_cluster(std::span<const ScoredBox<D>>(members), score_power);
}

// Multiplier applied to a fused score for a cluster of `cluster_size` boxes
// when the ensemble has `model_count` models (or that much total weight).
inline double rescale_factor(std::size_t cluster_size, double model_count,
                             RescaleVariant variant) {
  if (cluster_size == 0)
    throw ContractViolation("cluster size must be at least 1");
  if (!(model_count > 0.0))
    throw ContractViolation("model count must be positive");
  const double t = static_cast<double>(cluster_size);
  const double n = model_count;
  return variant == RescaleVariant::clamped ? std::min(t, n) / n : t / n;
}

// Count-rescaled score, clamped to [0,1].
inline double rescale_confidence(double score, std::size_t cluster_size,
                                 double model_count, RescaleVariant variant) {
  return detail::clamp01(score *
                         rescale_factor(cluster_size, model_count, variant));
}

// Weighted Boxes Fusion, returning the clusters (grouped by label ascending,
// then in creation order). Each box joins the fused box it overlaps most,
// provided IoU > iou_threshold; otherwise it opens a new cluster. Fused boxes
// are recomputed from all members after every insertion.
template <std::size_t D>
std::vector<Cluster<D>> wbf_clusters(const PredictionSet<D>& preds,
                                     const FusionParams& params) {
  validate(params);
  const auto groups = detail::collect_candidates(preds, params);
  const double n_equiv = detail::total_weight(preds.model_weights);
  std::vector<Cluster<D>> out;
  for (const auto& [label, cands] : groups) {
    std::vector<Cluster<D>> clusters;
    std::vector<double> fused_vol;
    for (const auto& c : cands) {
      std::size_t best = clusters.size();
      double best_iou = params.iou_threshold;
      for (std::size_t j = 0; j < clusters.size(); ++j) {
        const double v = iou_with_volumes(clusters[j].fused.box, fused_vol[j],
                                          c.box.box, c.vol);
        if (v > best_iou) {
          best_iou = v;
          best = j;
        }
      }
      if (best == clusters.size()) {
        Cluster<D> cl;
        cl.members.push_back(c.box);
        cl.sources.push_back(c.ref);
        cl.fused = c.box;
        clusters.push_back(std::move(cl));
        fused_vol.push_back(c.vol);
      } else {
        Cluster<D>& cl = clusters[best];
        cl.members.push_back(c.box);
        cl.sources.push_back(c.ref);
        cl.fused = fuse_cluster<D>(cl.members, params.score_power);
        fused_vol[best] = volume(cl.fused.box);
      }
    }
    for (auto& cl : clusters) {
      cl.mean_score = cl.fused.score;
      cl.fused.score = rescale_confidence(cl.mean_score, cl.members.size(),
                                          n_equiv, params.rescale);
      out.push_back(std::move(cl));
    }
  }
  return out;
}

template <std::size_t D>
std::vector<ScoredBox<D>> wbf(const PredictionSet<D>& preds,
                              const FusionParams& params) {
  std::vector<ScoredBox<D>> out;
  for (auto& cl : wbf_clusters(preds, params)) out.push_back(cl.fused);
  detail::sort_by_score(out);
  return out;
}

// Greedy hard suppression: keep the best remaining box, drop every box of
// the same label overlapping it by more than iou_threshold.
template <std::size_t D>
std::vector<ScoredBox<D>> nms(const PredictionSet<D>& preds,
                              const FusionParams& params) {
  validate(params);
  std::vector<ScoredBox<D>> out;
  for (const auto& [label, cands] : detail::collect_candidates(preds, params)) {
    std::vector<char> suppressed(cands.size(), 0);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (suppressed[i]) continue;
      ScoredBox<D> kept = cands[i].box;
      kept.score = detail::clamp01(kept.score);
      out.push_back(kept);
      for (std::size_t j = i + 1; j < cands.size(); ++j) {
        if (suppressed[j]) continue;
        if (iou_with_volumes(cands[i].box.box, cands[i].vol, cands[j].box.box,
                             cands[j].vol) > params.iou_threshold)
          suppressed[j] = 1;
      }
    }
  }
  detail::sort_by_score(out);
  return out;
}

// Soft-NMS. The linear variant scales overlapping scores by (1 - IoU) above
// iou_threshold; the Gaussian variant scales every remaining score by
// exp(-IoU^2 / sigma).
template <std::size_t D>
std::vector<ScoredBox<D>> soft_nms(const PredictionSet<D>& preds,
                                   const FusionParams& params) {
  validate(params);
  const bool gaussian = params.method == Method::soft_nms_gaussian;
  if (!gaussian && params.method != Method::soft_nms_linear)
    throw InvalidParameter("soft_nms needs a soft-nms method, got " +
                           std::string(method_name(params.method)));
  std::vector<ScoredBox<D>> out;
  for (const auto& [label, cands] : detail::collect_candidates(preds, params)) {
    // `remaining` stays in the sorted candidate order so ties on the decayed
    // score resolve to the earlier candidate.
    std::vector<detail::Candidate<D>> remaining(cands.begin(), cands.end());
    while (!remaining.empty()) {
      std::size_t top = 0;
      for (std::size_t j = 1; j < remaining.size(); ++j)
        if (remaining[j].box.score > remaining[top].box.score) top = j;
      const detail::Candidate<D> sel = remaining[top];
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(top));
      if (sel.box.score < params.soft_score_threshold) continue;
      ScoredBox<D> kept = sel.box;
      kept.score = detail::clamp01(kept.score);
      out.push_back(kept);

      std::size_t w = 0;
      for (std::size_t j = 0; j < remaining.size(); ++j) {
        auto c = remaining[j];
        const double ov = iou_with_volumes(sel.box.box, sel.vol, c.box.box, c.vol);
        if (gaussian) {
          c.box.score *= std::exp(-(ov * ov) / params.soft_sigma);
        } else if (ov > params.iou_threshold) {
          c.box.score *= (1.0 - ov);
        }
        if (c.box.score >= params.soft_score_threshold) remaining[w++] = c;
      }
      remaining.resize(w);
    }
  }
  detail::sort_by_score(out);
  return out;
}

// Non-maximum weighted clusters: the best unassigned box seeds a cluster,
// every unassigned box with IoU > iou_threshold against the seed joins it,
// coordinates are averaged with weights score * IoU(box, seed), and the
// fused score is the seed's score.
template <std::size_t D>
std::vector<Cluster<D>> nmw_clusters(const PredictionSet<D>& preds,
                                     const FusionParams& params) {
  validate(params);
  std::vector<Cluster<D>> out;
  for (const auto& [label, cands] : detail::collect_candidates(preds, params)) {
    std::vector<char> assigned(cands.size(), 0);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (assigned[i]) continue;
      assigned[i] = 1;
      const auto& seed = cands[i];
      Cluster<D> cl;
      std::vector<double> weights;
      cl.members.push_back(seed.box);
      cl.sources.push_back(seed.ref);
      weights.push_back(seed.box.score *
                        iou_with_volumes(seed.box.box, seed.vol, seed.box.box,
                                         seed.vol));
      for (std::size_t j = i + 1; j < cands.size(); ++j) {
        if (assigned[j]) continue;
        const double ov = iou_with_volumes(seed.box.box, seed.vol,
                                           cands[j].box.box, cands[j].vol);
        if (ov > params.iou_threshold) {
          assigned[j] = 1;
          cl.members.push_back(cands[j].box);
          cl.sources.push_back(cands[j].ref);
          weights.push_back(cands[j].box.score * ov);
        }
      }
      cl.fused = seed.box;
      cl.mean_score = seed.box.score;
      if (!(detail::total_weight(weights) > 0.0)) {
        cl.fused.box = seed.box.box;
      } else {
        cl.fused.box = detail::weighted_mean_box<D>(
            cl.members, [&](std::size_t k) { return weights[k]; });
      }
      cl.fused.score = detail::clamp01(seed.box.score);
      out.push_back(std::move(cl));
    }
  }
  return out;
}

template <std::size_t D>
std::vector<ScoredBox<D>> nmw(const PredictionSet<D>& preds,
                              const FusionParams& params) {
  std::vector<ScoredBox<D>> out;
  for (auto& cl : nmw_clusters(preds, params)) out.push_back(cl.fused);
  detail::sort_by_score(out);
  return out;
}

// Dispatches to the method named in params.
template <std::size_t D>
std::vector<ScoredBox<D>> fuse(const PredictionSet<D>& preds,
                               const FusionParams& params) {
  switch (params.method) {
    case Method::wbf:
      return wbf(preds, params);
    case Method::nms:
      return nms(preds, params);
    case Method::soft_nms_linear:
    case Method::soft_nms_gaussian:
      return soft_nms(preds, params);
    case Method::nmw:
      return nmw(preds, params);
  }
  throw InvalidParameter("unknown fusion method; expected one of: " +
                         method_list());
}

// Fuses every image independently and returns records ordered by image id,
// then by fused score descending. The result does not depend on `workers`.
template <std::size_t D>
std::vector<DetectionRecord<D>> fuse_images(
    const std::map<std::string, PredictionSet<D>>& images,
    const FusionParams& params, std::size_t workers = 1) {
  validate(params);
  std::vector<const std::string*> ids;
  std::vector<const PredictionSet<D>*> sets;
  for (const auto& [id, set] : images) {
    ids.push_back(&id);
    sets.push_back(&set);
  }
  std::vector<std::vector<ScoredBox<D>>> fused(sets.size());
  parallel_for(sets.size(), workers,
               [&](std::size_t i) { fused[i] = fuse(*sets[i], params); });
  std::vector<DetectionRecord<D>> out;
  for (std::size_t i = 0; i < fused.size(); ++i)
    for (const auto& b : fused[i]) out.push_back(to_record(*ids[i], b));
  return out;
}

}  // namespace boxfusion
