#pragma once

#include "fedseg/data/sample.hpp"
#include "fedseg/rng.hpp"

namespace fedseg::data {

/// Synthetic ultrasound-like phantom of `size` x `size` pixels.
///
/// Tissue background with low-frequency texture, multiplicative speckle and a
/// depth attenuation ramp. Benign samples carry a smooth hypoechoic ellipse;
/// malignant ones an ellipse whose radius is modulated by random angular
/// harmonics, with a sharper, rougher boundary. The mask is the exact lesion
/// support. The same Rng state always yields the same sample.
Sample generate_phantom(Label label, int size, Rng& rng);

}  // namespace fedseg::data
