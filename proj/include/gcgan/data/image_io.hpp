#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcgan/nn/tensor.hpp"

namespace gcgan::data {

struct ImageIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Maps [-1,1] to 0..255 by (x+1)*127.5, rounded half-to-even and clamped.
inline std::uint8_t to_byte(float v) {
  const double scaled = std::nearbyint((static_cast<double>(v) + 1.0) * 127.5);  // default mode: to nearest even
  return static_cast<std::uint8_t>(scaled < 0 ? 0 : (scaled > 255 ? 255 : scaled));
}

inline float from_byte(std::uint8_t b) { return static_cast<float>(b / 127.5 - 1.0); }

/// 8-bit interleaved RGB raster.
struct RgbImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel

  std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// Converts a (3,H,W) tensor in [-1,1] to bytes.
inline RgbImage to_rgb(const nn::Tensor<float>& chw) {
  if (chw.shape().size() != 3 || chw.dim(0) != 3) throw nn::ShapeError("expected (3,H,W), got " + nn::to_string(chw.shape()));
  RgbImage out{chw.dim(2), chw.dim(1), {}};
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  const std::size_t plane = static_cast<std::size_t>(out.width) * out.height;
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) out.pixels[i * 3 + c] = to_byte(chw[c * plane + i]);
  return out;
}

inline nn::Tensor<float> from_rgb(const RgbImage& img) {
  nn::Tensor<float> out(nn::Shape{3, img.height, img.width});
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) out[c * plane + i] = from_byte(img.pixels[i * 3 + c]);
  return out;
}

namespace detail {
struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void png_fail(png_structp, png_const_charp msg) { throw ImageIoError(msg); }
inline void png_warn(png_structp, png_const_charp) {}
}  // namespace detail

inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
  detail::FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw ImageIoError("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_fail, detail::png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageIoError("libpng initialisation failed");
  }
  try {
    png_init_io(png, f.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y)
      png_write_row(png, img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3);
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

inline void write_png(const std::filesystem::path& path, const nn::Tensor<float>& chw) { write_png(path, to_rgb(chw)); }

/// Reads any 8/16-bit PNG and converts it to 8-bit RGB.
inline RgbImage read_png(const std::filesystem::path& path) {
  detail::FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw ImageIoError("cannot open image: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_fail, detail::png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageIoError("libpng initialisation failed");
  }
  RgbImage out;
  try {
    png_init_io(png, f.get());
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
      png_set_expand_gray_1_2_4_to_8(png);
      png_set_gray_to_rgb(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    if (png_get_rowbytes(png, info) != static_cast<std::size_t>(out.width) * 3)
      throw ImageIoError("unsupported PNG layout: " + path.string());
    out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
    std::vector<png_bytep> rows(out.height);
    for (int y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + static_cast<std::size_t>(y) * out.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

/// Bilinear resize with pixel-centre alignment.
inline RgbImage resize_bilinear(const RgbImage& src, int width, int height) {
  if (src.width == width && src.height == height) return src;
  RgbImage out{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3)};
  const double sx = static_cast<double>(src.width) / width, sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - wy) * ((1 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c)) +
                         wy * ((1 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c));
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(v));
      }
    }
  }
  return out;
}

/// Tiles equally sized (3,H,W) images into a grid with a 2px border of value -1.
inline nn::Tensor<float> image_grid(const std::vector<nn::Tensor<float>>& images, int columns, int border = 2) {
  if (images.empty()) throw std::invalid_argument("image_grid: no images");
  const int h = images.front().dim(1), w = images.front().dim(2);
  const int n = static_cast<int>(images.size());
  const int rows = (n + columns - 1) / columns;
  const int gh = rows * h + (rows + 1) * border, gw = columns * w + (columns + 1) * border;
  nn::Tensor<float> grid(nn::Shape{3, gh, gw}, -1.0f);
  for (int i = 0; i < n; ++i) {
    if (images[i].shape() != images.front().shape()) throw nn::ShapeError("image_grid: mixed image shapes");
    const int oy = border + (i / columns) * (h + border), ox = border + (i % columns) * (w + border);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          grid[(static_cast<std::size_t>(c) * gh + oy + y) * gw + ox + x] = images[i][(c * h + y) * w + x];
  }
  return grid;
}

}  // namespace gcgan::data
