#include "fedseg/data/sample.hpp"

#include <algorithm>

#include "fedseg/error.hpp"

namespace fedseg::data {

std::string_view label_name(Label label) {
  switch (label) {
    case Label::normal:
      return "normal";
    case Label::benign:
      return "benign";
    case Label::malignant:
      return "malignant";
  }
  return "unknown";
}

std::optional<Label> parse_label(std::string_view name) {
  for (Label l : kAllLabels) {
    if (label_name(l) == name) return l;
  }
  return std::nullopt;
}

std::size_t Sample::positive_pixels() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

void validate_sample(const Sample& s) {
  const auto id = std::to_string(s.id);
  if (s.height <= 0 || s.width <= 0) throw FormatError("sample " + id + ": empty extent");
  const auto n = static_cast<std::size_t>(s.height) * static_cast<std::size_t>(s.width);
  if (s.image.size() != n || s.mask.size() != n) throw FormatError("sample " + id + ": image/mask size mismatch");
  for (double v : s.image) {
    if (!(v >= 0.0 && v <= 1.0)) throw FormatError("sample " + id + ": image value outside [0,1]");
  }
  for (auto m : s.mask) {
    if (m > 1) throw FormatError("sample " + id + ": mask value outside {0,1}");
  }
  const std::size_t positives = s.positive_pixels();
  if (s.label == Label::normal && positives != 0) throw FormatError("sample " + id + ": normal sample with lesion");
  if (s.label != Label::normal && positives == 0) throw FormatError("sample " + id + ": lesion sample with empty mask");
}

Batch make_batch(std::span<const Sample> samples) {
  if (samples.empty()) throw UsageError("make_batch: no samples");
  const auto h = static_cast<std::size_t>(samples[0].height);
  const auto w = static_cast<std::size_t>(samples[0].width);
  std::vector<double> images, masks;
  images.reserve(samples.size() * h * w);
  masks.reserve(samples.size() * h * w);
  for (const auto& s : samples) {
    if (static_cast<std::size_t>(s.height) != h || static_cast<std::size_t>(s.width) != w) {
      throw ShapeError("make_batch: samples have different extents");
    }
    images.insert(images.end(), s.image.begin(), s.image.end());
    for (auto m : s.mask) masks.push_back(static_cast<double>(m));
  }
  const numerics::Shape shape{samples.size(), 1, h, w};
  return {numerics::Tensor(shape, std::move(images)), numerics::Tensor(shape, std::move(masks))};
}

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
  std::vector<Sample> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(dataset.at(i));
  return make_batch(picked);
}

}  // namespace fedseg::data
