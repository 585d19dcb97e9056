#include "fedseg/data/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

#include "fedseg/error.hpp"

namespace fedseg::data {

GrayImage read_png_gray(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    const std::string reason = png.message;
    png_image_free(&png);
    throw FormatError("cannot read PNG " + path.string() + ": " + reason);
  }
  png.format = PNG_FORMAT_GRAY;
  GrayImage image;
  image.width = static_cast<int>(png.width);
  image.height = static_cast<int>(png.height);
  image.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
    const std::string reason = png.message;
    png_image_free(&png);
    throw FormatError("corrupt PNG " + path.string() + ": " + reason);
  }
  return image;
}

void write_png_gray(const std::filesystem::path& path, const GrayImage& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height)) {
    throw UsageError("write_png_gray: inconsistent raster");
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    const std::string reason = png.message;
    png_image_free(&png);
    throw Error("failed writing PNG " + path.string() + ": " + reason);
  }
}

std::vector<double> resize_bilinear(const std::vector<double>& src, int h, int w, int out_h, int out_w) {
  std::vector<double> out(static_cast<std::size_t>(out_h) * static_cast<std::size_t>(out_w));
  auto coord = [](int o, int in, int out_n, int& i0, int& i1, double& t) {
    double s = (o + 0.5) * in / out_n - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    i0 = static_cast<int>(std::floor(s));
    i1 = std::min(i0 + 1, in - 1);
    t = s - i0;
  };
  for (int y = 0; y < out_h; ++y) {
    int y0, y1;
    double ty;
    coord(y, h, out_h, y0, y1, ty);
    for (int x = 0; x < out_w; ++x) {
      int x0, x1;
      double tx;
      coord(x, w, out_w, x0, x1, tx);
      auto at = [&](int yy, int xx) { return src[static_cast<std::size_t>(yy * w + xx)]; };
      out[static_cast<std::size_t>(y * out_w + x)] =
          (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) + ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
    }
  }
  return out;
}

std::vector<double> resize_nearest(const std::vector<double>& src, int h, int w, int out_h, int out_w) {
  std::vector<double> out(static_cast<std::size_t>(out_h) * static_cast<std::size_t>(out_w));
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(h - 1, static_cast<int>(std::floor((y + 0.5) * h / out_h)));
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(w - 1, static_cast<int>(std::floor((x + 0.5) * w / out_w)));
      out[static_cast<std::size_t>(y * out_w + x)] = src[static_cast<std::size_t>(sy * w + sx)];
    }
  }
  return out;
}

}  // namespace fedseg::data
