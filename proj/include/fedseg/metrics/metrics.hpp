#pragma once

#include <cstdint>
#include <span>

#include "fedseg/numerics/tensor.hpp"

namespace fedseg::metrics {

using numerics::Tensor;

/// Pixel-level confusion counts. Counts from several images add up
/// (micro-averaging).
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& other);
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b);

/// One row of the evaluation table. Every field lies in [0, 1].
struct MetricsRow {
  double dice_loss = 0.0;
  double iou = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

/// Thresholds `probabilities` (p >= threshold is positive) against binary
/// `truth` and counts. Throws ShapeError when the lengths differ.
ConfusionCounts confusion(std::span<const double> probabilities, std::span<const double> truth,
                          double threshold = 0.5);
ConfusionCounts confusion(const Tensor& probabilities, const Tensor& truth, double threshold = 0.5);

/// Ratios from counts. A 0/0 ratio counts as 1: an empty prediction of an
/// empty mask is a perfect result. dice_loss = 1 - f1. Throws UsageError
/// when total() == 0.
MetricsRow metrics_from_counts(const ConfusionCounts& counts);

inline constexpr double kSoftDiceSmoothing = 1e-6;

/// 1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps) over the whole batch,
/// differentiable with respect to `probabilities`.
Tensor soft_dice_loss(const Tensor& probabilities, const Tensor& truth);

}  // namespace fedseg::metrics
