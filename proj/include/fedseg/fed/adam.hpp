#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fedseg::fed {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias-corrected moments over a flat parameter vector.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  const AdamOptions& options() const { return options_; }
  std::size_t steps() const { return t_; }

  /// Drops the moment estimates and the step counter.
  void reset();
  /// w <- w - lr * m_hat / (sqrt(v_hat) + eps). Throws ShapeError when the
  /// lengths differ or change between steps.
  void step(std::span<double> w, std::span<const double> g);

 private:
  AdamOptions options_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace fedseg::fed
