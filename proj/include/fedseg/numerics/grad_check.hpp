#pragma once

#include <functional>
#include <vector>

#include "fedseg/numerics/tensor.hpp"

namespace fedseg::numerics {

using ScalarFunction = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares the reverse-mode gradient of `f` at `inputs` with central
/// differences (f(x+eps) - f(x-eps)) / (2 eps), coordinate by coordinate.
/// Returns max |a - n| / max(1e-8, |a| + |n|) over every coordinate of every
/// input. Inputs are restored to their original values on return.
double grad_check(const ScalarFunction& f, std::vector<Tensor>& inputs, double eps = 1e-6);

}  // namespace fedseg::numerics
