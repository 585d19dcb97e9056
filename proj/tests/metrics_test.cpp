#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fedseg/error.hpp"
#include "fedseg/metrics/metrics.hpp"
#include "fedseg/numerics/grad_check.hpp"
#include "fedseg/rng.hpp"

using namespace fedseg;
using metrics::ConfusionCounts;
using metrics::MetricsRow;
using numerics::Tensor;

namespace {

// Straight-line evaluation of the definitions, kept separate from the library.
struct Oracle {
  double dice_loss, iou, sens, spec, f1, acc;
};

double ratio(double num, double den) { return den == 0.0 ? 1.0 : num / den; }

Oracle oracle_from(const std::vector<double>& p, const std::vector<double>& t) {
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool pred = p[i] >= 0.5;
    const bool truth = t[i] >= 0.5;
    if (pred && truth) tp += 1;
    else if (!pred && !truth) tn += 1;
    else if (pred) fp += 1;
    else fn += 1;
  }
  Oracle o;
  o.sens = ratio(tp, tp + fn);
  o.spec = ratio(tn, tn + fp);
  o.acc = (tp + tn) / (tp + tn + fp + fn);
  o.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  o.iou = ratio(tp, tp + fp + fn);
  o.dice_loss = 1 - o.f1;
  return o;
}

ConfusionCounts counts(std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
  ConfusionCounts c;
  c.tp = tp;
  c.tn = tn;
  c.fp = fp;
  c.fn = fn;
  return c;
}

}  // namespace

TEST(Metrics, WorkedExample) {
  // 10 pixels: tp=2, fp=1, fn=1, tn=6
  const std::vector<double> p = {0.9, 0.8, 0.7, 0.1, 0.2, 0.3, 0.4, 0.0, 0.1, 0.2};
  const std::vector<double> t = {1, 1, 0, 1, 0, 0, 0, 0, 0, 0};
  const auto c = metrics::confusion(p, t);
  EXPECT_EQ(c, counts(2, 6, 1, 1));
  const auto m = metrics::metrics_from_counts(c);
  EXPECT_NEAR(m.sensitivity, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.specificity, 6.0 / 7.0, 1e-12);
  EXPECT_NEAR(m.accuracy, 0.8, 1e-12);
  EXPECT_NEAR(m.f1, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.iou, 0.5, 1e-12);
  EXPECT_NEAR(m.dice_loss, 1.0 / 3.0, 1e-12);
  // rounded table values
  EXPECT_NEAR(m.sensitivity, 0.6667, 5e-5);
  EXPECT_NEAR(m.specificity, 0.8571, 5e-5);
  EXPECT_NEAR(m.dice_loss, 0.3333, 5e-5);
}

TEST(Metrics, PerfectPrediction) {
  const auto m = metrics::metrics_from_counts(counts(5, 11, 0, 0));
  EXPECT_EQ(m, (MetricsRow{0.0, 1.0, 1.0, 1.0, 1.0, 1.0}));
}

TEST(Metrics, EmptyMaskPredictedEmptyIsPerfect) {
  const auto m = metrics::metrics_from_counts(counts(0, 16, 0, 0));
  EXPECT_EQ(m, (MetricsRow{0.0, 1.0, 1.0, 1.0, 1.0, 1.0}));
}

TEST(Metrics, AllBackgroundPredictedPositive) {
  const auto m = metrics::metrics_from_counts(counts(0, 0, 16, 0));
  EXPECT_EQ(m.sensitivity, 1.0);
  EXPECT_EQ(m.specificity, 0.0);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_EQ(m.iou, 0.0);
  EXPECT_EQ(m.dice_loss, 1.0);
}

TEST(Metrics, EmptyCountsRejected) {
  EXPECT_THROW(metrics::metrics_from_counts(ConfusionCounts{}), UsageError);
}

TEST(Metrics, LengthMismatchRejected) {
  const std::vector<double> p(4, 0.5), t(5, 0.0);
  EXPECT_THROW(metrics::confusion(p, t), ShapeError);
}

TEST(Metrics, TensorOverloadMatchesSpan) {
  Rng rng(3);
  std::vector<double> p(2 * 16), t(2 * 16);
  for (auto& v : p) v = rng.uniform();
  for (auto& v : t) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
  const Tensor tp({2, 1, 4, 4}, p), tt({2, 1, 4, 4}, t);
  EXPECT_EQ(metrics::confusion(tp, tt), metrics::confusion(p, t));
}

TEST(Metrics, RandomPairsMatchBruteForce) {
  Rng rng(12345);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> p(256), t(256);
    const double density = rng.uniform();
    for (auto& v : p) v = rng.uniform();
    for (auto& v : t) v = rng.bernoulli(density) ? 1.0 : 0.0;
    const auto m = metrics::metrics_from_counts(metrics::confusion(p, t));
    const auto o = oracle_from(p, t);
    ASSERT_NEAR(m.dice_loss, o.dice_loss, 1e-12);
    ASSERT_NEAR(m.iou, o.iou, 1e-12);
    ASSERT_NEAR(m.sensitivity, o.sens, 1e-12);
    ASSERT_NEAR(m.specificity, o.spec, 1e-12);
    ASSERT_NEAR(m.f1, o.f1, 1e-12);
    ASSERT_NEAR(m.accuracy, o.acc, 1e-12);
  }
}

TEST(MetricsProperties, Invariants) {
  Rng rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto c = counts(rng.below(50), rng.below(50), rng.below(50), rng.below(50) + 1);
    const auto m = metrics::metrics_from_counts(c);
    for (double v : {m.dice_loss, m.iou, m.sensitivity, m.specificity, m.f1, m.accuracy}) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    ASSERT_LE(m.iou, m.f1 + 1e-15);
    ASSERT_EQ(m.f1 + m.dice_loss, 1.0);
    // Dice and IoU are tied by f1 = 2 iou / (1 + iou).
    ASSERT_NEAR(m.f1, 2 * m.iou / (1 + m.iou), 1e-12);
  }
}

TEST(MetricsProperties, MicroAveragingIsAssociative) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(3 * 64), t(3 * 64);
    for (auto& v : p) v = rng.uniform();
    for (auto& v : t) v = rng.bernoulli(0.2) ? 1.0 : 0.0;
    ConfusionCounts parts;
    for (int k = 0; k < 3; ++k)
      parts += metrics::confusion(std::span<const double>(p).subspan(64 * k, 64),
                                  std::span<const double>(t).subspan(64 * k, 64));
    ASSERT_EQ(parts, metrics::confusion(p, t));
  }
}

TEST(MetricsProperties, AddingTruePositivesNeverHurts) {
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    auto c = counts(rng.below(30), rng.below(30), rng.below(30), rng.below(30) + 1);
    const auto before = metrics::metrics_from_counts(c);
    c.fn -= 1;
    c.tp += 1;
    const auto after = metrics::metrics_from_counts(c);
    ASSERT_GE(after.f1, before.f1);
    ASSERT_GE(after.iou, before.iou);
    ASSERT_GE(after.sensitivity, before.sensitivity);
    ASSERT_GE(after.accuracy, before.accuracy);
  }
}

TEST(SoftDice, KnownValues) {
  const Tensor t({1, 1, 2, 2}, std::vector<double>{1, 1, 0, 0});
  const Tensor exact({1, 1, 2, 2}, std::vector<double>{1, 1, 0, 0});
  EXPECT_NEAR(metrics::soft_dice_loss(exact, t).item(), 0.0, 1e-15);
  const Tensor inverse({1, 1, 2, 2}, std::vector<double>{0, 0, 1, 1});
  const double eps = metrics::kSoftDiceSmoothing;
  EXPECT_NEAR(metrics::soft_dice_loss(inverse, t).item(), 1.0 - eps / (4 + eps), 1e-15);
  const Tensor half({1, 1, 2, 2}, 0.5);
  EXPECT_NEAR(metrics::soft_dice_loss(half, t).item(), 1.0 - (2.0 + eps) / (4.0 + eps), 1e-15);
  // Empty truth and empty prediction agree perfectly.
  const Tensor zeros({1, 1, 2, 2}, 0.0);
  EXPECT_NEAR(metrics::soft_dice_loss(zeros, zeros).item(), 0.0, 1e-15);
  const Tensor tiny({1, 1, 2, 2}, 1e-8);
  EXPECT_LE(metrics::soft_dice_loss(tiny, zeros).item(), 1e-1);
  EXPECT_GE(metrics::soft_dice_loss(inverse, t).item(), 1.0 - 1e-5);
}

TEST(Metrics, ExtremeCounts) {
  const std::vector<double> ones(64, 1.0), zeros(64, 0.0);
  EXPECT_EQ(metrics::confusion(ones, zeros), counts(0, 0, 64, 0));
  std::vector<double> t(100, 0.0);
  for (int i = 0; i < 10; ++i) t[i * 7] = 1.0;
  EXPECT_EQ(metrics::confusion(t, t), counts(10, 90, 0, 0));
}

TEST(SoftDice, ShapeMismatch) {
  EXPECT_THROW(metrics::soft_dice_loss(Tensor({1, 1, 2, 2}), Tensor({1, 1, 2, 3})), ShapeError);
}

TEST(SoftDice, GradientCheck) {
  Rng rng(8);
  std::vector<double> pv(2 * 25), tv(2 * 25);
  for (auto& v : pv) v = rng.uniform(0.05, 0.95);
  for (auto& v : tv) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
  const Tensor truth({2, 1, 5, 5}, tv);
  std::vector<Tensor> inputs{Tensor({2, 1, 5, 5}, pv)};
  inputs[0].set_requires_grad(true);
  const double err = numerics::grad_check(
      [&](const std::vector<Tensor>& in) { return metrics::soft_dice_loss(in[0], truth); }, inputs);
  EXPECT_LE(err, 1e-6);
}
