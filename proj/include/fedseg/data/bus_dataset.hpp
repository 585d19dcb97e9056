#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fedseg/data/sample.hpp"

namespace fedseg::data {

struct LoadReport {
  std::size_t loaded = 0;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

/// Loads <root>/{normal,benign,malignant}/<name>.png with masks at
/// <name>_mask.png in the same directory. Images are resized bilinearly to
/// size x size and scaled to [0, 1]; masks are resized nearest-neighbour and
/// binarized at 0.5. Other files whose stem contains "_mask" are ignored.
///
/// An image without a mask throws FormatError naming the image. Unreadable
/// files are skipped and recorded in `report`.
Dataset load_bus_directory(const std::filesystem::path& root, int size, LoadReport* report = nullptr);

/// Writes `dataset` in the layout read by load_bus_directory. File names are
/// <label>_<id, zero padded>.png.
void write_bus_directory(const Dataset& dataset, const std::filesystem::path& root);

}  // namespace fedseg::data
