#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fedseg::data {

/// 8-bit grayscale raster, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Reads any PNG and converts it to 8-bit grayscale (palette expanded, alpha
/// dropped, RGB mixed to luma, 16-bit reduced). Throws FormatError.
GrayImage read_png_gray(const std::filesystem::path& path);

/// Writes an 8-bit grayscale PNG with no timestamp chunk, so equal rasters
/// give equal bytes.
void write_png_gray(const std::filesystem::path& path, const GrayImage& image);

/// Resamples a [0, 1] raster to `out_h` x `out_w`.
std::vector<double> resize_bilinear(const std::vector<double>& src, int h, int w, int out_h, int out_w);
std::vector<double> resize_nearest(const std::vector<double>& src, int h, int w, int out_h, int out_w);

}  // namespace fedseg::data
