#include "fedseg/data/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "fedseg/error.hpp"

namespace fedseg::data {

namespace {

constexpr double kPi = std::numbers::pi;

struct Lesion {
  double cx, cy;      // center, pixels
  double ax, ay;      // semi-axes, pixels
  double angle;       // orientation, radians
  double darkening;   // interior intensity factor
  double softness;    // boundary transition width, in normalized radius
  std::array<double, 5> amplitude{};  // harmonics k = 3..7
  std::array<double, 5> phase{};

  // Normalized radial coordinate (rho) and boundary radius at (x, y).
  std::pair<double, double> polar(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / ax;
    const double v = (-s * dx + c * dy) / ay;
    const double rho = std::hypot(u, v);
    const double theta = std::atan2(v, u);
    double boundary = 1.0;
    for (std::size_t k = 0; k < amplitude.size(); ++k) {
      boundary += amplitude[k] * std::cos(static_cast<double>(k + 3) * theta + phase[k]);
    }
    return {rho, boundary};
  }
};

Lesion draw_lesion(Label label, int size, Rng& rng) {
  const double n = size;
  Lesion l{};
  l.cx = rng.uniform(0.3, 0.7) * n;
  l.cy = rng.uniform(0.3, 0.7) * n;
  l.ax = rng.uniform(0.10, 0.25) * n;
  l.ay = rng.uniform(0.10, 0.25) * n;
  l.angle = rng.uniform(0.0, kPi);
  l.darkening = rng.uniform(0.3, 0.6);
  if (label == Label::malignant) {
    l.softness = 0.03;
    for (std::size_t k = 0; k < l.amplitude.size(); ++k) {
      l.amplitude[k] = rng.uniform(0.03, 0.10);
      l.phase[k] = rng.uniform(0.0, 2.0 * kPi);
    }
  } else {
    l.softness = 0.12;
  }
  return l;
}

}  // namespace

Sample generate_phantom(Label label, int size, Rng& rng) {
  if (size < 4) throw ConfigError("size", "phantom size must be >= 4");
  const auto n = static_cast<std::size_t>(size);
  Sample s;
  s.label = label;
  s.height = size;
  s.width = size;
  s.image.assign(n * n, 0.0);
  s.mask.assign(n * n, 0);

  // Tissue texture: a few low-frequency plane waves around a base level.
  const double base = rng.uniform(0.55, 0.7);
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::array<Wave, 3> waves{};
  for (auto& w : waves) {
    w = {rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0.0, 2.0 * kPi), rng.uniform(0.02, 0.06)};
  }
  const double attenuation = rng.uniform(0.2, 0.4);

  std::optional<Lesion> lesion;
  if (label != Label::normal) lesion = draw_lesion(label, size, rng);

  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      double v = base;
      for (const auto& w : waves) v += w.amp * std::sin(2.0 * kPi * (w.fx * px + w.fy * py) / size + w.phase);
      if (lesion) {
        const auto [rho, boundary] = lesion->polar(px, py);
        if (rho <= boundary) s.mask[y * n + x] = 1;
        // Smooth step from interior (1) to exterior (0) centered on the boundary.
        const double t = std::clamp((rho - boundary) / lesion->softness * 0.5 + 0.5, 0.0, 1.0);
        const double inside = 1.0 - t * t * (3.0 - 2.0 * t);
        v *= 1.0 - (1.0 - lesion->darkening) * inside;
      }
      v *= 1.0 - attenuation * static_cast<double>(y) / static_cast<double>(n - 1);
      s.image[y * n + x] = v;
    }
  }

  // Multiplicative speckle: Rayleigh amplitude with unit mean, partially mixed.
  const double rayleigh_scale = 1.0 / std::sqrt(kPi / 2.0);
  for (double& v : s.image) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    const double speckle = rayleigh_scale * std::sqrt(-2.0 * std::log(u));
    v = std::clamp(v * (0.65 + 0.35 * speckle), 0.0, 1.0);
  }
  return s;
}

}  // namespace fedseg::data
