#include "fedseg/data/bus_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fedseg/data/image_io.hpp"
#include "fedseg/error.hpp"

namespace fedseg::data {

namespace fs = std::filesystem;

namespace {

std::vector<double> to_unit(const GrayImage& img) {
  std::vector<double> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] / 255.0;
  return v;
}

}  // namespace

Dataset load_bus_directory(const fs::path& root, int size, LoadReport* report) {
  if (!fs::is_directory(root)) throw FormatError("not a directory: " + root.string());
  if (size < 1) throw ConfigError("data.image_size", "must be positive");
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  Dataset out;
  std::uint64_t next_id = 0;
  for (Label label : kAllLabels) {
    const fs::path dir = root / std::string(label_name(label));
    if (!fs::is_directory(dir)) continue;
    std::vector<fs::path> images;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const auto& p = entry.path();
      if (p.extension() != ".png" || p.stem().string().find("_mask") != std::string::npos) continue;
      images.push_back(p);
    }
    std::sort(images.begin(), images.end());
    for (const auto& image_path : images) {
      const fs::path mask_path = image_path.parent_path() / (image_path.stem().string() + "_mask.png");
      if (!fs::exists(mask_path)) throw FormatError("missing mask for image " + image_path.string());
      GrayImage img, mask;
      try {
        img = read_png_gray(image_path);
        mask = read_png_gray(mask_path);
      } catch (const FormatError& e) {
        ++rep.skipped;
        rep.warnings.push_back(e.what());
        continue;
      }
      Sample s;
      s.id = next_id++;
      s.label = label;
      s.height = size;
      s.width = size;
      s.image = resize_bilinear(to_unit(img), img.height, img.width, size, size);
      for (double& v : s.image) v = std::clamp(v, 0.0, 1.0);
      const auto m = resize_nearest(to_unit(mask), mask.height, mask.width, size, size);
      s.mask.resize(m.size());
      for (std::size_t i = 0; i < m.size(); ++i) s.mask[i] = m[i] >= 0.5 ? 1 : 0;
      out.push_back(std::move(s));
      ++rep.loaded;
    }
  }
  return out;
}

void write_bus_directory(const Dataset& dataset, const fs::path& root) {
  for (Label label : kAllLabels) fs::create_directories(root / std::string(label_name(label)));
  for (const auto& s : dataset) {
    char stem[64];
    std::snprintf(stem, sizeof stem, "%s_%06llu", std::string(label_name(s.label)).c_str(),
                  static_cast<unsigned long long>(s.id));
    const fs::path dir = root / std::string(label_name(s.label));
    GrayImage img{s.width, s.height, std::vector<std::uint8_t>(s.image.size())};
    GrayImage mask{s.width, s.height, std::vector<std::uint8_t>(s.mask.size())};
    for (std::size_t i = 0; i < s.image.size(); ++i) {
      img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(s.image[i], 0.0, 1.0) * 255.0));
      mask.pixels[i] = s.mask[i] ? 255 : 0;
    }
    write_png_gray(dir / (std::string(stem) + ".png"), img);
    write_png_gray(dir / (std::string(stem) + "_mask.png"), mask);
  }
}

}  // namespace fedseg::data
