#pragma once

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepglioma/srh/image.hpp"

namespace deepglioma::srh {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

[[noreturn]] inline void png_fail(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

inline void png_warn(png_structp, png_const_charp) {}

// Interleaved rows, big-endian 16-bit samples as libpng expects.
inline void write_png_rows(const std::filesystem::path& path, std::size_t h, std::size_t w, int color_type,
                           int bit_depth, const std::vector<png_byte>& buffer, std::size_t row_bytes) {
  auto f = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  if (!png) throw std::runtime_error("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write " + path.string() + ": " + err);
  }
  png_init_io(png, f.get());
  png_set_compression_level(png, 3);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < h; ++y) png_write_row(png, buffer.data() + y * row_bytes);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct RawPng {
  std::size_t height = 0, width = 0;
  int color_type = 0, bit_depth = 0;
  std::size_t row_bytes = 0;
  std::vector<png_byte> buffer;
};

inline RawPng read_png_rows(const std::filesystem::path& path) {
  auto f = open_file(path, "rb");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  if (!png) throw std::runtime_error("png: cannot create reader");
  png_infop info = png_create_info_struct(png);
  RawPng raw;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png read " + path.string() + ": " + err);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  raw.width = png_get_image_width(png, info);
  raw.height = png_get_image_height(png, info);
  raw.color_type = png_get_color_type(png, info);
  raw.bit_depth = png_get_bit_depth(png, info);
  if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
    err = "interlaced images are not supported";
    png_longjmp(png, 1);
  }
  raw.row_bytes = png_get_rowbytes(png, info);
  raw.buffer.resize(raw.row_bytes * raw.height);
  for (std::size_t y = 0; y < raw.height; ++y) png_read_row(png, raw.buffer.data() + y * raw.row_bytes, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return raw;
}

}  // namespace detail

inline void write_png(const std::filesystem::path& path, const Image16& img) {
  if (img.channels != 1) throw std::invalid_argument("write_png: 16-bit output must be single-channel");
  const std::size_t rb = img.width * 2;
  std::vector<png_byte> buf(rb * img.height);
  for (std::size_t i = 0; i < img.plane(); ++i) {
    buf[2 * i] = static_cast<png_byte>(img.data[i] >> 8);
    buf[2 * i + 1] = static_cast<png_byte>(img.data[i] & 0xff);
  }
  detail::write_png_rows(path, img.height, img.width, PNG_COLOR_TYPE_GRAY, 16, buf, rb);
}

/// 8-bit gray (1 channel) or RGB (3 planar channels).
inline void write_png(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_png: 8-bit output needs 1 or 3 channels");
  const std::size_t c = img.channels, rb = img.width * c;
  std::vector<png_byte> buf(rb * img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t k = 0; k < c; ++k) buf[y * rb + x * c + k] = img.at(y, x, k);
  detail::write_png_rows(path, img.height, img.width, c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, 8, buf, rb);
}

inline Image16 read_png16(const std::filesystem::path& path) {
  const auto raw = detail::read_png_rows(path);
  if (raw.color_type != PNG_COLOR_TYPE_GRAY || raw.bit_depth != 16) {
    throw std::runtime_error(path.string() + ": expected a 16-bit grayscale PNG");
  }
  Image16 img(raw.height, raw.width, 1);
  for (std::size_t i = 0; i < img.plane(); ++i) {
    img.data[i] = static_cast<std::uint16_t>((raw.buffer[2 * i] << 8) | raw.buffer[2 * i + 1]);
  }
  return img;
}

inline Image8 read_png8(const std::filesystem::path& path) {
  const auto raw = detail::read_png_rows(path);
  if (raw.bit_depth != 8 || (raw.color_type != PNG_COLOR_TYPE_GRAY && raw.color_type != PNG_COLOR_TYPE_RGB)) {
    throw std::runtime_error(path.string() + ": expected an 8-bit gray or RGB PNG");
  }
  const std::size_t c = raw.color_type == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  Image8 img(raw.height, raw.width, c);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t k = 0; k < c; ++k) img.at(y, x, k) = raw.buffer[y * raw.row_bytes + x * c + k];
  return img;
}

}  // namespace deepglioma::srh
