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
#include "boxfusion/evaluation.hpp"

#include <algorithm>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

namespace boxfusion {
namespace {

using testing::image_id;

ScoredBox<2> pred(double x1, double y1, double x2, double y2, double score,
                  int label = 0) {
  return ScoredBox<2>{make_box2d(x1, y1, x2, y2), label, score, 0};
}

GroundTruthBox<2> truth(double x1, double y1, double x2, double y2,
                        int label = 0, std::string image = "img") {
  return GroundTruthBox<2>{make_box2d(x1, y1, x2, y2), label, std::move(image)};
}

TEST(Match, ExactPrediction) {
  const auto c = match_at_threshold(std::vector{pred(0.1, 0.1, 0.5, 0.5, 0.9)},
                                    std::vector{truth(0.1, 0.1, 0.5, 0.5)}, 0.5);
  EXPECT_EQ(c, (MatchCounts{1, 0, 0}));
}

TEST(Match, NoPredictions) {
  const auto c = match_at_threshold(std::vector<ScoredBox<2>>{},
                                    std::vector{truth(0.1, 0.1, 0.5, 0.5)}, 0.5);
  EXPECT_EQ(c, (MatchCounts{0, 0, 1}));
}

TEST(Match, OneToOne) {
  const auto c = match_at_threshold(
      std::vector{pred(0, 0, 1, 0.9, 0.8), pred(0, 0, 1, 0.95, 0.9)},
      std::vector{truth(0, 0, 1, 1)}, 0.5);
  EXPECT_EQ(c, (MatchCounts{1, 1, 0}));
}

TEST(Match, StrictThreshold) {
  // IoU of 0.5 exactly is not a hit at t = 0.5
  const std::vector g{truth(0, 0, 1, 1)};
  const std::vector p{pred(0, 0, 1, 0.5, 0.9)};
  EXPECT_EQ(match_at_threshold(p, g, 0.5).tp, 0u);
  EXPECT_EQ(match_at_threshold(p, g, 0.49).tp, 1u);
}

TEST(Match, HigherScoreMatchesFirst) {
  // The lower-scored prediction fits better but the higher-scored one claims
  // the ground truth first.
  const std::vector g{truth(0, 0, 1, 1)};
  const std::vector p{pred(0, 0, 1, 1, 0.5), pred(0, 0, 1, 0.7, 0.9)};
  EXPECT_EQ(match_at_threshold(p, g, 0.6), (MatchCounts{1, 1, 0}));
  EXPECT_EQ(match_at_threshold(p, g, 0.75), (MatchCounts{1, 1, 0}));
}

TEST(Match, PicksHighestIouGroundTruth) {
  // The first prediction takes the ground truth it overlaps most, leaving
  // the other one for the second prediction.
  const std::vector g{truth(0, 0, 0.5, 1), truth(0.1, 0, 0.6, 1)};
  const std::vector p{pred(0.09, 0, 0.59, 1, 0.9), pred(0, 0, 0.5, 1, 0.8)};
  EXPECT_EQ(match_at_threshold(p, g, 0.5), (MatchCounts{2, 0, 0}));
}

TEST(Match, RejectsMixedLabels) {
  EXPECT_THROW(match_at_threshold(std::vector{pred(0, 0, 1, 1, 0.9, 1)},
                                  std::vector{truth(0, 0, 1, 1, 0)}, 0.5),
               ContractViolation);
}

TEST(Precision, Values) {
  EXPECT_EQ(precision_at({1, 0, 0}), 1.0);
  EXPECT_EQ(precision_at({1, 1, 0}), 0.5);
  EXPECT_EQ(precision_at({0, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(precision_at({2, 1, 1}), 0.5);
}

TEST(Thresholds, DefaultSweep) {
  const auto t = default_thresholds();
  ASSERT_EQ(t.size(), 10u);
  EXPECT_EQ(t.front(), 0.5);
  EXPECT_EQ(t[1], 0.55);
  EXPECT_EQ(t.back(), 0.95);
}

TEST(Thresholds, Parse) {
  EXPECT_EQ(parse_thresholds("0.5:0.95:0.05"), default_thresholds());
  EXPECT_EQ(parse_thresholds("0.5"), std::vector<double>{0.5});
  EXPECT_EQ(parse_thresholds("0.5, 0.75"), (std::vector<double>{0.5, 0.75}));
  // step does not land on stop: stop excluded
  EXPECT_EQ(parse_thresholds("0.5:0.8:0.2"), (std::vector<double>{0.5, 0.7}));
  EXPECT_EQ(parse_thresholds("0.3:0.3:0.1"), std::vector<double>{0.3});
  EXPECT_THROW(parse_thresholds(""), InvalidParameter);
  EXPECT_THROW(parse_thresholds("abc"), InvalidParameter);
  EXPECT_THROW(parse_thresholds("0.5:0.9"), InvalidParameter);
  EXPECT_THROW(parse_thresholds("0.5:0.9:0"), InvalidParameter);
  EXPECT_THROW(parse_thresholds("1.5"), InvalidParameter);
  EXPECT_THROW(parse_thresholds("0.5,"), InvalidParameter);
}

TEST(AveragePrecision, Perfect) {
  const auto t = default_thresholds();
  EXPECT_EQ(average_precision(std::vector{pred(0.1, 0.1, 0.5, 0.5, 1.0)},
                              std::vector{truth(0.1, 0.1, 0.5, 0.5)}, t),
            1.0);
}

TEST(AveragePrecision, IouSixFixture) {
  // IoU 0.6: hits at 0.5 and 0.55 only
  const std::vector p{pred(0, 0, 1, 0.6, 0.9)};
  const std::vector g{truth(0, 0, 1, 1)};
  ASSERT_DOUBLE_EQ(iou2d(p[0].box, g[0].box), 0.6);
  EXPECT_NEAR(average_precision(p, g, default_thresholds()), 0.2, 1e-12);
}

TEST(AveragePrecision, SingleThresholdIsPrecision) {
  const std::vector p{pred(0, 0, 1, 0.9, 0.8), pred(0, 0, 1, 0.95, 0.9)};
  const std::vector g{truth(0, 0, 1, 1)};
  EXPECT_EQ(average_precision(p, g, std::vector{0.5}),
            precision_at(match_at_threshold(p, g, 0.5)));
  EXPECT_THROW(average_precision(p, g, std::vector<double>{}), InvalidParameter);
}

TEST(MeanAp, OneClassPerfect) {
  const std::vector<DetectionRecord<2>> p{{"a", make_box2d(0, 0, 0.5, 0.5), 1, 1.0}};
  const std::vector g{truth(0, 0, 0.5, 0.5, 1, "a")};
  EXPECT_EQ(mean_ap(p, g, default_thresholds()).map, 1.0);
}

TEST(MeanAp, TwoClassesAverage) {
  const std::vector<DetectionRecord<2>> p{{"a", make_box2d(0, 0, 0.5, 0.5), 1, 1.0}};
  const std::vector g{truth(0, 0, 0.5, 0.5, 1, "a"), truth(0, 0, 0.5, 0.5, 2, "a")};
  const auto r = mean_ap(p, g, default_thresholds());
  ASSERT_EQ(r.classes.size(), 2u);
  EXPECT_EQ(r.classes[0].ap, 1.0);
  EXPECT_EQ(r.classes[1].ap, 0.0);
  EXPECT_EQ(r.map, 0.5);
}

TEST(MeanAp, CountsAggregateAcrossImages) {
  // image a: TP; image b: FN. Dataset precision 1 / 2.
  const std::vector<DetectionRecord<2>> p{{"a", make_box2d(0, 0, 0.5, 0.5), 0, 0.9}};
  const std::vector g{truth(0, 0, 0.5, 0.5, 0, "a"), truth(0, 0, 0.5, 0.5, 0, "b")};
  const auto r = mean_ap(p, g, std::vector{0.5});
  EXPECT_EQ(r.classes[0].counts[0], (MatchCounts{1, 0, 1}));
  EXPECT_EQ(r.map, 0.5);
}

TEST(MeanAp, PredictionOnlyClassesReportedSeparately) {
  const std::vector<DetectionRecord<2>> p{{"a", make_box2d(0, 0, 0.5, 0.5), 0, 0.9},
                                          {"a", make_box2d(0, 0, 0.5, 0.5), 7, 0.9}};
  const std::vector g{truth(0, 0, 0.5, 0.5, 0, "a")};
  const auto r = mean_ap(p, g, default_thresholds());
  EXPECT_EQ(r.map, 1.0);
  ASSERT_EQ(r.prediction_only.size(), 1u);
  EXPECT_EQ(r.prediction_only[0].label, 7);
  EXPECT_EQ(r.prediction_only[0].counts[0].fp, 1u);
}

TEST(MeanAp, EmptyInputs) {
  const std::vector g{truth(0, 0, 0.5, 0.5, 0, "a")};
  EXPECT_EQ(mean_ap(std::vector<DetectionRecord<2>>{}, g, default_thresholds()).map, 0.0);
  EXPECT_EQ(mean_ap(std::vector<DetectionRecord<2>>{}, std::vector<GroundTruthBox<2>>{},
                    default_thresholds())
                .map,
            0.0);
}

// Random dataset: jittered copies of ground truth, misses and strays.
using testing::random_dataset;

template <typename Box>
class EvalProperties : public ::testing::Test {};
using BoxTypes = ::testing::Types<Box2D, Box3D>;
TYPED_TEST_SUITE(EvalProperties, BoxTypes);

TYPED_TEST(EvalProperties, MatchesBruteForce) {
  constexpr std::size_t D = TypeParam::kDims;
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<DetectionRecord<D>> p;
    std::vector<GroundTruthBox<D>> g;
    random_dataset<D>(rng, 50, 5, p, g);
    const auto t = default_thresholds();
    const auto fast = mean_ap(p, g, t, 3);
    const auto slow = oracle::evaluate(p, g, t);
    EXPECT_NEAR(fast.map, slow.map, 1e-9);
    ASSERT_EQ(fast.classes.size(), slow.ap.size());
    for (const auto& c : fast.classes) EXPECT_NEAR(c.ap, slow.ap.at(c.label), 1e-9);
  }
}

TYPED_TEST(EvalProperties, PrecisionNonIncreasingInThreshold) {
  constexpr std::size_t D = TypeParam::kDims;
  std::mt19937_64 rng(22);
  std::vector<double> fine;
  for (int k = 1; k < 100; ++k) fine.push_back(k / 100.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<DetectionRecord<D>> p;
    std::vector<GroundTruthBox<D>> g;
    random_dataset<D>(rng, 10, 3, p, g);
    const auto r = mean_ap(p, g, fine);
    for (const auto& c : r.classes)
      for (std::size_t i = 1; i < c.precision.size(); ++i)
        EXPECT_LE(c.precision[i], c.precision[i - 1]);
  }
}

TYPED_TEST(EvalProperties, OrderInvariant) {
  constexpr std::size_t D = TypeParam::kDims;
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<DetectionRecord<D>> p;
    std::vector<GroundTruthBox<D>> g;
    random_dataset<D>(rng, 10, 4, p, g);
    const auto t = default_thresholds();
    const auto base = mean_ap(p, g, t);
    // Reverse the image and class order; relative order inside a group is
    // kept so that score ties resolve identically.
    auto key = [](const auto& x) { return std::make_pair(x.image, x.label); };
    std::stable_sort(p.begin(), p.end(), [&](const auto& a, const auto& b) { return key(a) > key(b); });
    std::stable_sort(g.begin(), g.end(), [&](const auto& a, const auto& b) { return key(a) > key(b); });
    const auto shuffled = mean_ap(p, g, t);
    EXPECT_EQ(shuffled.map, base.map);
    ASSERT_EQ(shuffled.classes.size(), base.classes.size());
    for (std::size_t i = 0; i < base.classes.size(); ++i)
      EXPECT_EQ(shuffled.classes[i].precision, base.classes[i].precision);
  }
}

TYPED_TEST(EvalProperties, FalsePositivesNeverHelpAndPerfectMatchesNeverHurt) {
  constexpr std::size_t D = TypeParam::kDims;
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<DetectionRecord<D>> p;
    std::vector<GroundTruthBox<D>> g;
    random_dataset<D>(rng, 8, 2, p, g);
    if (g.empty()) continue;
    const auto t = default_thresholds();
    const auto base = mean_ap(p, g, t);

    // A box with no overlap with anything labelled like the first GT.
    auto with_fp = p;
    AxisBox<D> tiny;
    for (std::size_t k = 0; k < D; ++k) {
      tiny.lo[k] = 0.0;
      tiny.hi[k] = 1e-4;
    }
    bool clear = true;
    for (const auto& x : g)
      if (iou(x.box, tiny) > 0.0) clear = false;
    if (clear) {
      with_fp.push_back({g[0].image, tiny, g[0].label, unit(rng)});
      const auto r = mean_ap(with_fp, g, t);
      for (std::size_t c = 0; c < r.classes.size(); ++c)
        for (std::size_t i = 0; i < t.size(); ++i)
          EXPECT_LE(r.classes[c].precision[i], base.classes[c].precision[i]);
    }

    // A perfect, lowest-scored prediction for a GT no prediction overlaps.
    for (const auto& x : g) {
      bool untouched = true;
      for (const auto& q : p)
        if (q.image == x.image && q.label == x.label && iou(q.box, x.box) > 0.0)
          untouched = false;
      if (!untouched) continue;
      auto with_tp = p;
      with_tp.push_back({x.image, x.box, x.label, 0.0});
      const auto r = mean_ap(with_tp, g, t);
      for (std::size_t c = 0; c < r.classes.size(); ++c)
        for (std::size_t i = 0; i < t.size(); ++i)
          EXPECT_GE(r.classes[c].precision[i], base.classes[c].precision[i]);
      break;
    }
  }
}

TYPED_TEST(EvalProperties, GroundTruthAsPredictionsIsPerfect) {
  constexpr std::size_t D = TypeParam::kDims;
  std::mt19937_64 rng(25);
  std::vector<DetectionRecord<D>> ignored;
  std::vector<GroundTruthBox<D>> g;
  random_dataset<D>(rng, 20, 5, ignored, g);
  std::vector<DetectionRecord<D>> p;
  for (const auto& x : g) p.push_back({x.image, x.box, x.label, 1.0});
  EXPECT_EQ(mean_ap(p, g, default_thresholds()).map, 1.0);
}

}  // namespace
}  // namespace boxfusion
