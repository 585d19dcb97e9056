#pragma once

#include <cstdint>

#include "fedseg/data/sample.hpp"
#include "fedseg/rng.hpp"

namespace fedseg::data {

/// Random transform ranges. A transform whose range is degenerate (zero
/// probability, zero degrees, [1, 1] gain, ...) is disabled.
struct AugmentationConfig {
  bool enabled = true;
  double flip_horizontal_p = 0.5;
  double flip_vertical_p = 0.5;
  double rotation_deg = 25.0;      // uniform in [-r, r]
  double translate_frac = 0.10;    // uniform in [-t, t] of each extent
  double scale_min = 0.9;
  double scale_max = 1.1;
  double contrast_min = 0.8;
  double contrast_max = 1.2;
  double brightness_delta = 0.1;   // uniform in [-d, d]
  std::uint64_t seed = 0;

  static AugmentationConfig disabled();
  void validate() const;
};

/// Concrete spatial transform. Applied about the image center: flips first,
/// then the similarity (scale, rotation, translation) by inverse mapping.
struct GeometricTransform {
  bool flip_horizontal = false;
  bool flip_vertical = false;
  double rotation_deg = 0.0;
  double scale = 1.0;
  double translate_x = 0.0;  // pixels
  double translate_y = 0.0;

  bool is_identity() const;
};

struct PhotometricTransform {
  double contrast = 1.0;    // gain about mid-gray
  double brightness = 0.0;  // additive

  bool is_identity() const { return contrast == 1.0 && brightness == 0.0; }
};

/// Image resampled bilinearly (zero outside), mask by nearest neighbour and
/// re-binarized at 0.5. Flips are exact pixel permutations.
Sample apply_geometric(const Sample& sample, const GeometricTransform& transform);

/// Image only; result clamped to [0, 1].
Sample apply_photometric(const Sample& sample, const PhotometricTransform& transform);

/// Draws a transform from `config` and applies it. Returns an exact copy when
/// augmentation is disabled.
Sample augment(const Sample& sample, const AugmentationConfig& config, Rng& rng);

}  // namespace fedseg::data
