#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedseg/numerics/tensor.hpp"

namespace fedseg::data {

enum class Label : std::uint8_t { normal, benign, malignant };

inline constexpr Label kAllLabels[] = {Label::normal, Label::benign, Label::malignant};

std::string_view label_name(Label label);
std::optional<Label> parse_label(std::string_view name);

/// Grayscale image in [0, 1] with a binary lesion mask of the same extent.
/// Normal samples have an empty mask; benign and malignant ones do not.
struct Sample {
  std::uint64_t id = 0;
  Label label = Label::normal;
  int height = 0;
  int width = 0;
  std::vector<double> image;
  std::vector<std::uint8_t> mask;

  std::size_t positive_pixels() const;
  bool operator==(const Sample&) const = default;
};

/// Throws FormatError describing the first violated Sample invariant.
void validate_sample(const Sample& sample);

using Dataset = std::vector<Sample>;

struct Batch {
  numerics::Tensor images;  // [N, 1, H, W]
  numerics::Tensor masks;   // [N, 1, H, W], values in {0, 1}
};

/// Stacks the samples at `indices`; all must share one extent.
Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices);
Batch make_batch(std::span<const Sample> samples);

}  // namespace fedseg::data
