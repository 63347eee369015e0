#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "ssm/errors.hpp"
#include "ssm/metrics/metrics.hpp"
#include "test_util.hpp"

using namespace ssm;
using metrics::ScoredFrames;
using num::Tensor;

namespace {

ScoredFrames one_hot_truth(const std::vector<int>& labels, std::size_t classes) {
  ScoredFrames d{Tensor::matrix(labels.size(), classes), labels};
  for (std::size_t t = 0; t < labels.size(); ++t) d.scores(t, labels[t]) = 1.0;
  return d;
}

// Builds a frame set where only class 1 matters: column 1 holds `scores`.
ScoredFrames single_class(const std::vector<double>& scores, const std::vector<int>& positive) {
  ScoredFrames d{Tensor::matrix(scores.size(), 2), {}};
  for (std::size_t t = 0; t < scores.size(); ++t) {
    d.scores(t, 1) = scores[t];
    d.labels.push_back(positive[t]);
  }
  return d;
}

// Plain AP over a ranked 0/1 relevance list, optionally calibrated.
double ap_reference(const std::vector<int>& ranked, double w) {
  double tp = 0, fp = 0, sum = 0;
  for (int r : ranked) {
    if (r) {
      tp += 1;
      sum += w * tp / (w * tp + fp);
    } else {
      fp += 1;
    }
  }
  return sum / tp;
}

}  // namespace

TEST(Map, PerfectScoresGiveOne) {
  const auto d = one_hot_truth({0, 1, 2, 2, 3, 1, 0}, 4);
  EXPECT_DOUBLE_EQ(metrics::per_frame_map(d), 1.0);
  EXPECT_DOUBLE_EQ(metrics::calibrated_map(d), 1.0);
  EXPECT_DOUBLE_EQ(metrics::class_mean_top5_recall(d), 1.0);
  EXPECT_DOUBLE_EQ(metrics::accuracy(d), 1.0);
}

TEST(Map, PositiveRankedSecondHasHalfPrecision) {
  const auto d = single_class({0.9, 0.7, 0.2, 0.1}, {0, 1, 0, 0});
  EXPECT_DOUBLE_EQ(metrics::per_frame_map(d), 0.5);
}

TEST(Map, TiesBreakByFrameIndex) {
  // Equal scores: frame 0 ranks before frame 1, so the positive at frame 1
  // sits second.
  const auto d = single_class({0.5, 0.5, 0.1}, {0, 1, 0});
  EXPECT_DOUBLE_EQ(metrics::per_frame_map(d), 0.5);
  const auto e = single_class({0.5, 0.5, 0.1}, {1, 0, 0});
  EXPECT_DOUBLE_EQ(metrics::per_frame_map(e), 1.0);
}

TEST(Map, ClassesWithoutPositivesExcluded) {
  ScoredFrames d{Tensor::matrix({{0.1, 0.9, 0.0}, {0.2, 0.1, 0.7}, {0.8, 0.3, 0.6}}), {1, 0, 0}};
  const auto ap = metrics::per_class_ap(d, false);
  EXPECT_TRUE(std::isnan(ap[2]));
  EXPECT_DOUBLE_EQ(metrics::per_frame_map(d), 1.0);
  ScoredFrames none{Tensor::matrix(2, 3), {0, 0}};
  EXPECT_THROW(metrics::per_frame_map(none), ArgumentError);
  EXPECT_THROW(metrics::calibrated_map(none), ArgumentError);
}

TEST(Map, HandRankedAveragePrecision) {
  // Ranking P N P N N.
  const auto d = single_class({0.9, 0.8, 0.7, 0.6, 0.5}, {1, 0, 1, 0, 0});
  EXPECT_NEAR(metrics::per_frame_map(d), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  // w = 3 / 2; calibrated precision 1 then 3 / (3 + 1).
  EXPECT_NEAR(metrics::calibrated_map(d), (1.0 + 0.75) / 2.0, 1e-12);
}

TEST(Map, CalibratedFourFrameInstance) {
  // One positive among four frames, so w = 3. Ranked first, then a false
  // positive: calibrated precision 1 at the positive.
  const auto d = single_class({0.9, 0.8, 0.3, 0.2}, {1, 0, 0, 0});
  EXPECT_NEAR(metrics::calibrated_map(d), 1.0, 1e-12);
  // Positive ranked third: TP 1, FP 2, w 3 gives 3 / 5.
  const auto e = single_class({0.9, 0.8, 0.7, 0.2}, {0, 0, 1, 0});
  EXPECT_NEAR(metrics::calibrated_map(e), 0.6, 1e-12);
  EXPECT_NEAR(metrics::per_frame_map(e), 1.0 / 3.0, 1e-12);
}

TEST(Map, BalancedInstanceGivesEqualMcap) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    // Two columns, class 1 positive on half the frames, so w = 1.
    std::vector<int> labels(20);
    for (std::size_t t = 0; t < 20; ++t) labels[t] = t % 2;
    std::shuffle(labels.begin(), labels.end(), rng);
    ScoredFrames d{test::random_matrix(20, 2, rng), labels};
    EXPECT_EQ(metrics::calibrated_map(d), metrics::per_frame_map(d));
  }
}

TEST(Map, MatchesReferenceOnRandomInstances) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 30, classes = 4;
    ScoredFrames d{test::random_matrix(n, classes, rng), std::vector<int>(n)};
    for (auto& y : d.labels) y = std::uniform_int_distribution<int>(0, classes - 1)(rng);
    double map = 0, mcap = 0;
    int counted = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return d.scores(a, c) > d.scores(b, c); });
      std::vector<int> ranked;
      int pos = 0;
      for (auto t : order) {
        ranked.push_back(d.labels[t] == static_cast<int>(c));
        pos += ranked.back();
      }
      if (pos == 0) continue;
      ++counted;
      map += ap_reference(ranked, 1.0);
      mcap += ap_reference(ranked, static_cast<double>(n - pos) / pos);
    }
    EXPECT_NEAR(metrics::per_frame_map(d), map / counted, 1e-12);
    EXPECT_NEAR(metrics::calibrated_map(d), mcap / counted, 1e-12);
  }
}

TEST(Top5, UniformScoresUseClassIndexTieBreak) {
  ScoredFrames d{Tensor::matrix(5, 10, 0.3), {0, 3, 5, 9, 5}};
  // Classes 0..4 are in the top five; 5 and 9 never are.
  EXPECT_DOUBLE_EQ(metrics::class_mean_top5_recall(d), 0.5);
}

TEST(Top5, NeverInTopFive) {
  ScoredFrames d{Tensor::matrix(3, 8), {7, 7, 7}};
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < 7; ++c) d.scores(t, c) = 1.0;
  EXPECT_DOUBLE_EQ(metrics::class_mean_top5_recall(d), 0.0);
}

TEST(Top5, FewerThanFiveClassesAlwaysRecalled) {
  std::mt19937_64 rng(4);
  ScoredFrames d{test::random_matrix(10, 3, rng), {0, 1, 2, 0, 1, 2, 0, 1, 2, 0}};
  EXPECT_DOUBLE_EQ(metrics::class_mean_top5_recall(d), 1.0);
}

TEST(Metrics, InvalidInputs) {
  ScoredFrames empty{Tensor(), {}};
  EXPECT_THROW(metrics::class_mean_top5_recall(empty), ArgumentError);
  ScoredFrames bad_label{Tensor::matrix(1, 3), {3}};
  EXPECT_THROW(metrics::per_frame_map(bad_label), ArgumentError);
  ScoredFrames mismatch{Tensor::matrix(2, 3), {1}};
  EXPECT_THROW(metrics::per_frame_map(mismatch), DimensionError);
}

TEST(Metrics, InvariantUnderMonotoneTransforms) {
  const std::vector<std::function<double(double)>> transforms = {
      [](double x) { return 3.0 * x + 1.0; }, [](double x) { return x * x * x; },
      [](double x) { return std::exp(x); },   [](double x) { return std::atan(x); },
      [](double x) { return x - 100.0; },     [](double x) { return std::log(x + 2.0); },
  };
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    ScoredFrames d{test::random_matrix(40, 7, rng), std::vector<int>(40)};
    for (auto& v : d.scores.data()) v = std::round(v * 50.0) / 50.0;  // coarse grid so ties occur
    for (auto& y : d.labels) y = std::uniform_int_distribution<int>(0, 6)(rng);
    std::uniform_real_distribution<double> u(0.2, 4.0);
    const auto& f = transforms[static_cast<std::size_t>(trial) % transforms.size()];
    const double a = u(rng), b = u(rng) - 2.0;
    ScoredFrames g = d;
    for (auto& v : g.scores.data()) v = a * f(v) + b;
    EXPECT_EQ(metrics::per_frame_map(g), metrics::per_frame_map(d));
    EXPECT_EQ(metrics::calibrated_map(g), metrics::calibrated_map(d));
    EXPECT_EQ(metrics::class_mean_top5_recall(g), metrics::class_mean_top5_recall(d));
  }
}

TEST(Metrics, FrameReorderingWithConsistentTieBreak) {
  std::mt19937_64 rng(11);
  ScoredFrames d{test::random_matrix(25, 5, rng), std::vector<int>(25)};
  for (auto& y : d.labels) y = std::uniform_int_distribution<int>(0, 4)(rng);
  std::vector<std::size_t> perm(25);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  ScoredFrames p{Tensor::matrix(25, 5), std::vector<int>(25)};
  for (std::size_t t = 0; t < 25; ++t) {
    p.labels[t] = d.labels[perm[t]];
    for (std::size_t c = 0; c < 5; ++c) p.scores(t, c) = d.scores(perm[t], c);
  }
  EXPECT_NEAR(metrics::per_frame_map(p), metrics::per_frame_map(d), 1e-15);
  EXPECT_NEAR(metrics::calibrated_map(p), metrics::calibrated_map(d), 1e-15);
  EXPECT_NEAR(metrics::class_mean_top5_recall(p), metrics::class_mean_top5_recall(d), 1e-15);
}
