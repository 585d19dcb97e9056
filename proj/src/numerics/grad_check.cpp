#include "fedseg/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "fedseg/error.hpp"

namespace fedseg::numerics {

double grad_check(const ScalarFunction& f, std::vector<Tensor>& inputs, double eps) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  f(inputs).backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.has_grad()) {
      analytic.emplace_back(in.grad().begin(), in.grad().end());
    } else {
      analytic.emplace_back(in.numel(), 0.0);
    }
  }

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + eps;
      const double plus = f(inputs).item();
      values[i] = original - eps;
      const double minus = f(inputs).item();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace fedseg::numerics
