// Copyright 2026 The dermtriage Authors.
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

#include "dermtriage/metrics.h"

#include <random>

#include <gtest/gtest.h>

#include "dermtriage/error.h"
#include "oracles.h"

namespace dermtriage::metrics {
namespace {

Roi Box(double cx, double cy, double w, double h) { return {cx, cy, w, h, std::nullopt}; }

std::vector<ScoredLabel> RandomPairs(std::mt19937_64& rng, bool force_both) {
  std::uniform_int_distribution<int> n_dist(2, 50), level(0, 9), bit(0, 1);
  while (true) {
    const int n = n_dist(rng);
    std::vector<ScoredLabel> pairs;
    for (int i = 0; i < n; ++i) pairs.push_back({level(rng) / 10.0, bit(rng)});
    int pos = 0;
    for (const auto& p : pairs) pos += p.label;
    if (!force_both || (pos > 0 && pos < n)) return pairs;
  }
}

TEST(AucTest, PerfectRanking) { EXPECT_DOUBLE_EQ(Auc({{0.9, 1}, {0.1, 0}}), 1.0); }

TEST(AucTest, HandExample) { EXPECT_NEAR(Auc({{0.9, 1}, {0.8, 0}, {0.3, 1}}), 0.5, 1e-12); }

TEST(AucTest, SingleClassIsUndefined) {
  EXPECT_THROW(Auc({{0.9, 1}, {0.4, 1}}), UndefinedMetricError);
  EXPECT_THROW(Auc({{0.9, 0}}), UndefinedMetricError);
}

TEST(AucTest, MatchesMannWhitneyWithTies) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const auto pairs = RandomPairs(rng, true);
    EXPECT_NEAR(Auc(pairs), oracle::MannWhitneyAuc(pairs), 1e-9);
  }
}

TEST(AucTest, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    auto pairs = RandomPairs(rng, true);
    const double base = Auc(pairs);
    for (auto& p : pairs) p.score = std::exp(3 * p.score) + 7;
    EXPECT_NEAR(Auc(pairs), base, 1e-12);
  }
}

TEST(AucTest, FlipSymmetry) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 50; ++t) {
    auto pairs = RandomPairs(rng, true);
    const double base = Auc(pairs);
    for (auto& p : pairs) {
      p.score = -p.score;
      p.label = 1 - p.label;
    }
    EXPECT_NEAR(Auc(pairs), base, 1e-12);
  }
}

TEST(AveragePrecisionTest, HandExample) {
  // Points (0,1), (0.5,1), (0.5,0.5), (1,2/3).
  EXPECT_NEAR(AveragePrecision({{0.9, 1}, {0.8, 0}, {0.3, 1}}), 0.5 + 7.0 / 24.0, 1e-12);
  EXPECT_NEAR(AveragePrecision({{0.9, 1}, {0.8, 0}, {0.3, 1}}), 0.7917, 5e-5);
}

TEST(AveragePrecisionTest, PerfectAndAllPositive) {
  EXPECT_DOUBLE_EQ(AveragePrecision({{0.9, 1}, {0.8, 1}, {0.2, 0}}), 1.0);
  EXPECT_DOUBLE_EQ(AveragePrecision({{0.9, 1}, {0.8, 1}, {0.8, 1}}), 1.0);
}

TEST(AveragePrecisionTest, NoPositivesIsUndefined) {
  EXPECT_THROW(AveragePrecision({{0.9, 0}}), UndefinedMetricError);
}

TEST(AveragePrecisionTest, MatchesBruteForce) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 200; ++t) {
    auto pairs = RandomPairs(rng, false);
    int pos = 0;
    for (const auto& p : pairs) pos += p.label;
    if (pos == 0) continue;
    EXPECT_NEAR(AveragePrecision(pairs), oracle::BruteForceAp(pairs), 1e-9);
    EXPECT_NEAR(AveragePrecision(pairs, pos + 3), oracle::BruteForceAp(pairs, pos + 3), 1e-9);
  }
}

TEST(AveragePrecisionTest, PositivesAboveNegativesIsOne) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 50; ++t) {
    std::vector<ScoredLabel> pairs;
    for (int i = 0; i < 10; ++i) pairs.push_back({1 + u(rng), 1});
    for (int i = 0; i < 10; ++i) pairs.push_back({u(rng), 0});
    EXPECT_DOUBLE_EQ(AveragePrecision(pairs), 1.0);
  }
}

TEST(IouTest, StatedCases) {
  EXPECT_DOUBLE_EQ(Iou(Box(5, 5, 4, 2), Box(5, 5, 4, 2)), 1.0);
  EXPECT_DOUBLE_EQ(Iou(Box(0, 0, 2, 2), Box(10, 10, 2, 2)), 0.0);
  EXPECT_DOUBLE_EQ(Iou(Box(1, 1, 2, 2), Box(2, 1, 2, 2)), 1.0 / 3.0);
}

TEST(IouTest, MatchesPixelCountOnIntegerBoxes) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> c(0, 12), s(1, 8);
  for (int t = 0; t < 300; ++t) {
    const int ax = c(rng), ay = c(rng), aw = s(rng), ah = s(rng);
    const int bx = c(rng), by = c(rng), bw = s(rng), bh = s(rng);
    int inter = 0;
    for (int y = 0; y < 24; ++y) {
      for (int x = 0; x < 24; ++x) {
        inter += (x >= ax && x < ax + aw && y >= ay && y < ay + ah) &&
                 (x >= bx && x < bx + bw && y >= by && y < by + bh);
      }
    }
    const double expected = double(inter) / double(aw * ah + bw * bh - inter);
    const Roi a = Box(ax + aw / 2.0, ay + ah / 2.0, aw, ah);
    const Roi b = Box(bx + bw / 2.0, by + bh / 2.0, bw, bh);
    EXPECT_NEAR(Iou(a, b), expected, 1e-12);
    EXPECT_DOUBLE_EQ(Iou(a, b), Iou(b, a));
    EXPECT_DOUBLE_EQ(Iou(a, a), 1.0);
  }
}

TEST(MatchTest, OneMatchPerGroundTruth) {
  const auto r = MatchDetections({{Box(5, 5, 4, 4), 0.9}, {Box(5.2, 5, 4, 4), 0.8}},
                                 {Box(5, 5, 4, 4)}, 0.5);
  EXPECT_TRUE(r.is_tp[0]);
  EXPECT_FALSE(r.is_tp[1]);
  EXPECT_EQ(r.tp_count(), 1);
  EXPECT_EQ(r.fp_count(), 1);
}

TEST(MatchTest, ZeroPredictions) {
  const auto r = MatchDetections({}, {Box(5, 5, 4, 4), Box(1, 1, 1, 1)}, 0.5);
  EXPECT_EQ(r.tp_count(), 0);
  EXPECT_EQ(r.fp_count(), 0);
  EXPECT_EQ(r.gt_matched, std::vector<bool>({false, false}));
}

TEST(MatchTest, RandomSmallCasesMatchGreedyOracle) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> count(0, 4), pos(0, 6), size(1, 4), score(0, 4);
  const double thresholds[] = {0.1, 0.3, 0.5, 0.75};
  for (int t = 0; t < 1000; ++t) {
    const int np = count(rng);
    const int ng = std::uniform_int_distribution<int>(0, 4 - np)(rng);
    std::vector<ScoredBox> preds;
    std::vector<Roi> gts;
    for (int i = 0; i < np; ++i) preds.push_back({Box(pos(rng), pos(rng), size(rng), size(rng)), score(rng) / 4.0});
    for (int i = 0; i < ng; ++i) gts.push_back(Box(pos(rng), pos(rng), size(rng), size(rng)));
    int prev_tp = 1 << 30;
    for (double thr : thresholds) {
      const auto r = MatchDetections(preds, gts, thr);
      const auto o = oracle::GreedyMatchOracle(preds, gts, thr);
      EXPECT_EQ(r.is_tp, o.is_tp);
      EXPECT_EQ(r.matched_gt, o.matched_gt);
      EXPECT_LE(r.tp_count(), prev_tp);
      EXPECT_LE(r.tp_count(), int(gts.size()));
      prev_tp = r.tp_count();
    }
  }
}

TEST(MapTest, PerfectDetectionsScoreOne) {
  std::vector<ImageBoxes> images = {
      {{{Box(5, 5, 4, 4), 0.9}}, {Box(5, 5, 4, 4)}},
      {{{Box(2, 2, 2, 2), 0.7}, {Box(9, 9, 3, 3), 0.6}}, {Box(2, 2, 2, 2), Box(9, 9, 3, 3)}}};
  const auto s = ComputeMap(images);
  for (const auto& [t, v] : s.per_threshold) EXPECT_DOUBLE_EQ(v, 1.0) << t;
  EXPECT_DOUBLE_EQ(s.map50_95, 1.0);
}

TEST(MapTest, LowOverlapScoresZero) {
  std::vector<ImageBoxes> images = {{{{Box(5, 5, 4, 4), 0.9}}, {Box(7, 5, 4, 4)}}};
  EXPECT_DOUBLE_EQ(MapAt(images, 0.5), 0.0);
}

TEST(MapTest, CocoRangeIsTenTermMean) {
  std::vector<ImageBoxes> images = {
      {{{Box(5, 5, 4, 4), 0.9}, {Box(5.4, 5, 4, 4), 0.3}, {Box(20, 20, 3, 3), 0.5}},
       {Box(5.3, 5.2, 4, 4), Box(20.5, 20, 3, 3.4)}}};
  const auto s = ComputeMap(images);
  double sum = 0;
  for (int k = 0; k < 10; ++k) sum += MapAt(images, 0.5 + 0.05 * k);
  EXPECT_NEAR(s.map50_95, sum / 10, 1e-12);
  EXPECT_EQ(s.per_threshold.size(), 10u);
  EXPECT_DOUBLE_EQ(s.map50, MapAt(images, 0.5));
  EXPECT_DOUBLE_EQ(s.map75, MapAt(images, 0.75));
}

TEST(MapTest, PooledRankingMatchesBruteForceAp) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> pos(0, 10), size(2, 5), n(0, 3);
  std::uniform_real_distribution<double> score(0, 1);
  for (int t = 0; t < 100; ++t) {
    std::vector<ImageBoxes> images(3);
    int total_gt = 0;
    std::vector<ScoredLabel> pooled;
    for (auto& im : images) {
      for (int g = n(rng); g > 0; --g) im.ground_truths.push_back(Box(pos(rng), pos(rng), size(rng), size(rng)));
      for (int p = n(rng); p > 0; --p) im.predictions.push_back({Box(pos(rng), pos(rng), size(rng), size(rng)), score(rng)});
      total_gt += int(im.ground_truths.size());
      const auto o = oracle::GreedyMatchOracle(im.predictions, im.ground_truths, 0.5);
      for (std::size_t i = 0; i < im.predictions.size(); ++i) {
        pooled.push_back({im.predictions[i].score, o.is_tp[i] ? 1 : 0});
      }
    }
    if (total_gt == 0) {
      EXPECT_THROW(MapAt(images, 0.5), UndefinedMetricError);
      continue;
    }
    const double expected = pooled.empty() ? 0.0 : oracle::BruteForceAp(pooled, total_gt);
    EXPECT_NEAR(MapAt(images, 0.5), expected, 1e-9);
  }
}

TEST(RecallTest, AnyOverlap) {
  EXPECT_DOUBLE_EQ(RecallAnyOverlap({{{{Box(5, 5, 4, 4), 0.9}}, {Box(6, 6, 4, 4), Box(30, 30, 2, 2)}}}), 0.5);
  EXPECT_DOUBLE_EQ(RecallAnyOverlap({{{}, {Box(6, 6, 4, 4)}}}), 0.0);
  EXPECT_DOUBLE_EQ(RecallAnyOverlap({{{{Box(5, 5, 4, 4), 0.1}}, {Box(6, 6, 4, 4)}}}), 1.0);
  EXPECT_THROW(RecallAnyOverlap({{{{Box(5, 5, 4, 4), 0.1}}, {}}}), UndefinedMetricError);
}

TEST(IouSummaryTest, LinearInterpolation) {
  const auto s = SummarizeIou({0.9, 0.5, 0.7});
  EXPECT_NEAR(s.median, 0.7, 1e-12);
  EXPECT_NEAR(s.q1, 0.6, 1e-12);
  EXPECT_NEAR(s.q3, 0.8, 1e-12);
  const auto one = SummarizeIou({0.42});
  EXPECT_DOUBLE_EQ(one.median, 0.42);
  EXPECT_DOUBLE_EQ(one.q1, one.q3);
  const auto same = SummarizeIou({0.3, 0.3, 0.3, 0.3});
  EXPECT_DOUBLE_EQ(same.q3 - same.q1, 0.0);
  EXPECT_THROW(SummarizeIou({}), UndefinedMetricError);
}

TEST(IouSummaryTest, QuantileMatchesOracle) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(1 + t % 9);
    for (auto& x : v) x = u(rng);
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      EXPECT_NEAR(Quantile(v, q), oracle::QuantileOracle(v, q), 1e-12);
    }
  }
}

TEST(IouSummaryTest, BestMatchKeepsOverlapsOnly) {
  const auto ious = BestMatchIous({{{{Box(5, 5, 4, 4), 0.9}, {Box(5, 5, 2, 2), 0.3}},
                                    {Box(5, 5, 4, 4), Box(40, 40, 2, 2)}}});
  ASSERT_EQ(ious.size(), 1u);
  EXPECT_DOUBLE_EQ(ious[0], 1.0);
}

}  // namespace
}  // namespace dermtriage::metrics
