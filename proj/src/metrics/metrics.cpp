#include "fedseg/metrics/metrics.hpp"

#include "fedseg/error.hpp"

namespace fedseg::metrics {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  tp += other.tp;
  tn += other.tn;
  fp += other.fp;
  fn += other.fn;
  return *this;
}

ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }

ConfusionCounts confusion(std::span<const double> probabilities, std::span<const double> truth, double threshold) {
  if (probabilities.size() != truth.size()) {
    throw ShapeError("confusion: " + std::to_string(probabilities.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " truth pixels");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool predicted = probabilities[i] >= threshold;
    const bool actual = truth[i] >= 0.5;
    if (predicted) {
      actual ? ++c.tp : ++c.fp;
    } else {
      actual ? ++c.fn : ++c.tn;
    }
  }
  return c;
}

ConfusionCounts confusion(const Tensor& probabilities, const Tensor& truth, double threshold) {
  if (probabilities.shape() != truth.shape()) {
    throw ShapeError("confusion: shape " + numerics::shape_string(probabilities.shape()) + " vs " +
                     numerics::shape_string(truth.shape()));
  }
  return confusion(probabilities.data(), truth.data(), threshold);
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsRow metrics_from_counts(const ConfusionCounts& c) {
  if (c.total() == 0) throw UsageError("metrics_from_counts: no pixels were evaluated");
  MetricsRow row;
  row.sensitivity = ratio(c.tp, c.tp + c.fn);
  row.specificity = ratio(c.tn, c.tn + c.fp);
  row.accuracy = ratio(c.tp + c.tn, c.total());
  row.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  row.iou = ratio(c.tp, c.tp + c.fp + c.fn);
  row.dice_loss = 1.0 - row.f1;
  return row;
}

Tensor soft_dice_loss(const Tensor& probabilities, const Tensor& truth) {
  if (probabilities.shape() != truth.shape()) {
    throw ShapeError("soft_dice_loss: shape " + numerics::shape_string(probabilities.shape()) + " vs " +
                     numerics::shape_string(truth.shape()));
  }
  const auto p = probabilities.data();
  const auto t = truth.data();
  double intersection = 0.0, sum_p = 0.0, sum_t = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    intersection += p[i] * t[i];
    sum_p += p[i];
    sum_t += t[i];
  }
  const double num = 2.0 * intersection + kSoftDiceSmoothing;
  const double den = sum_p + sum_t + kSoftDiceSmoothing;
  return Tensor::make_result(
      "soft_dice_loss", numerics::Shape{1}, numerics::Buffer{1.0 - num / den}, {probabilities, truth},
      [num, den](const numerics::detail::TensorImpl& result) {
        // d/dp_i [1 - num/den] = -(2 t_i den - num) / den^2
        auto& prob = *result.grad_fn->inputs[0];
        const auto& t = result.grad_fn->inputs[1]->data;
        if (!prob.requires_grad) return;
        const double g = result.grad[0];
        const double inv = 1.0 / (den * den);
        for (std::size_t i = 0; i < t.size(); ++i) prob.grad[i] -= g * (2.0 * t[i] * den - num) * inv;
      });
}

}  // namespace fedseg::metrics
