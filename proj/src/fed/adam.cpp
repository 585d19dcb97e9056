#include "fedseg/fed/adam.hpp"

#include <cmath>
#include <string>

#include "fedseg/error.hpp"

namespace fedseg::fed {

void Adam::reset() {
  m_.clear();
  v_.clear();
  t_ = 0;
}

void Adam::step(std::span<double> w, std::span<const double> g) {
  if (w.size() != g.size()) {
    throw ShapeError("adam: " + std::to_string(w.size()) + " weights vs " + std::to_string(g.size()) + " gradients");
  }
  if (t_ == 0) {
    m_.assign(w.size(), 0.0);
    v_.assign(w.size(), 0.0);
  } else if (m_.size() != w.size()) {
    throw ShapeError("adam: parameter count changed between steps");
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < w.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * g[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * g[i] * g[i];
    w[i] -= options_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + options_.eps);
  }
}

}  // namespace fedseg::fed
