#include "fedseg/data/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fedseg/error.hpp"

namespace fedseg::data {

AugmentationConfig AugmentationConfig::disabled() {
  AugmentationConfig c;
  c.enabled = false;
  return c;
}

void AugmentationConfig::validate() const {
  auto prob = [](double p, const char* key) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(key, "must lie in [0, 1]");
  };
  prob(flip_horizontal_p, "augment.flip_horizontal_p");
  prob(flip_vertical_p, "augment.flip_vertical_p");
  if (!(rotation_deg >= 0.0 && rotation_deg <= 180.0)) throw ConfigError("augment.rotation_deg", "must lie in [0, 180]");
  if (!(translate_frac >= 0.0 && translate_frac < 0.5)) throw ConfigError("augment.translate_frac", "must lie in [0, 0.5)");
  if (!(scale_min > 0.0 && scale_min <= scale_max)) throw ConfigError("augment.scale_min", "need 0 < scale_min <= scale_max");
  if (!(contrast_min >= 0.0 && contrast_min <= contrast_max)) {
    throw ConfigError("augment.contrast_min", "need 0 <= contrast_min <= contrast_max");
  }
  if (!(brightness_delta >= 0.0 && brightness_delta <= 1.0)) throw ConfigError("augment.brightness_delta", "must lie in [0, 1]");
}

bool GeometricTransform::is_identity() const {
  return !flip_horizontal && !flip_vertical && rotation_deg == 0.0 && scale == 1.0 && translate_x == 0.0 &&
         translate_y == 0.0;
}

namespace {

template <typename T>
void flip(std::vector<T>& v, int h, int w, bool horizontal) {
  const auto W = static_cast<std::size_t>(w), H = static_cast<std::size_t>(h);
  if (horizontal) {
    for (std::size_t y = 0; y < H; ++y) std::reverse(v.begin() + static_cast<std::ptrdiff_t>(y * W),
                                                     v.begin() + static_cast<std::ptrdiff_t>((y + 1) * W));
  } else {
    for (std::size_t y = 0; y < H / 2; ++y) {
      std::swap_ranges(v.begin() + static_cast<std::ptrdiff_t>(y * W), v.begin() + static_cast<std::ptrdiff_t>((y + 1) * W),
                       v.begin() + static_cast<std::ptrdiff_t>((H - 1 - y) * W));
    }
  }
}

}  // namespace

Sample apply_geometric(const Sample& sample, const GeometricTransform& t) {
  Sample out = sample;
  if (t.flip_horizontal) {
    flip(out.image, out.height, out.width, true);
    flip(out.mask, out.height, out.width, true);
  }
  if (t.flip_vertical) {
    flip(out.image, out.height, out.width, false);
    flip(out.mask, out.height, out.width, false);
  }
  if (t.rotation_deg == 0.0 && t.scale == 1.0 && t.translate_x == 0.0 && t.translate_y == 0.0) return out;

  // Forward map: p' = c + T + s R (p - c). Inverse: p = c + R^T (p' - c - T) / s.
  const int h = out.height, w = out.width;
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double theta = t.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const std::vector<double> src_img = out.image;
  const std::vector<std::uint8_t> src_mask = out.mask;
  auto pixel = [&](int y, int x) { return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0 : src_img[static_cast<std::size_t>(y * w + x)]; };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx - t.translate_x, dy = y - cy - t.translate_y;
      const double sx = cx + (c * dx + s * dy) / t.scale;
      const double sy = cy + (-s * dx + c * dy) / t.scale;
      const auto idx = static_cast<std::size_t>(y * w + x);

      const double fx = std::floor(sx), fy = std::floor(sy);
      const double ax = sx - fx, ay = sy - fy;
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      out.image[idx] = (1 - ay) * ((1 - ax) * pixel(y0, x0) + ax * pixel(y0, x0 + 1)) +
                       ay * ((1 - ax) * pixel(y0 + 1, x0) + ax * pixel(y0 + 1, x0 + 1));

      const int nx = static_cast<int>(std::lround(sx)), ny = static_cast<int>(std::lround(sy));
      const double m = (nx < 0 || nx >= w || ny < 0 || ny >= h) ? 0.0 : src_mask[static_cast<std::size_t>(ny * w + nx)];
      out.mask[idx] = m >= 0.5 ? 1 : 0;
    }
  }
  for (double& v : out.image) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Sample apply_photometric(const Sample& sample, const PhotometricTransform& t) {
  Sample out = sample;
  if (t.is_identity()) return out;
  for (double& v : out.image) v = std::clamp((v - 0.5) * t.contrast + 0.5 + t.brightness, 0.0, 1.0);
  return out;
}

Sample augment(const Sample& sample, const AugmentationConfig& config, Rng& rng) {
  if (!config.enabled) return sample;
  GeometricTransform g;
  g.flip_horizontal = config.flip_horizontal_p > 0.0 && rng.bernoulli(config.flip_horizontal_p);
  g.flip_vertical = config.flip_vertical_p > 0.0 && rng.bernoulli(config.flip_vertical_p);
  if (config.rotation_deg > 0.0) g.rotation_deg = rng.uniform(-config.rotation_deg, config.rotation_deg);
  if (config.scale_min != 1.0 || config.scale_max != 1.0) g.scale = rng.uniform(config.scale_min, config.scale_max);
  if (config.translate_frac > 0.0) {
    g.translate_x = rng.uniform(-config.translate_frac, config.translate_frac) * sample.width;
    g.translate_y = rng.uniform(-config.translate_frac, config.translate_frac) * sample.height;
  }
  PhotometricTransform p;
  if (config.contrast_min != 1.0 || config.contrast_max != 1.0) {
    p.contrast = rng.uniform(config.contrast_min, config.contrast_max);
  }
  if (config.brightness_delta > 0.0) p.brightness = rng.uniform(-config.brightness_delta, config.brightness_delta);
  return apply_photometric(apply_geometric(sample, g), p);
}

}  // namespace fedseg::data
