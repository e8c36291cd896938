#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "nir/errors.hpp"

namespace nir {

struct RawImage8 {
  std::size_t height = 0, width = 0;
  std::vector<unsigned char> rgb;  // height*width*3
};

struct RawImage16 {
  std::size_t height = 0, width = 0;
  std::vector<std::uint16_t> gray;  // height*width, host order
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

struct PngInfo {
  std::size_t height = 0, width = 0;
  int bit_depth = 0;
  bool grayscale = false;
};

// Header-only probe, used to distinguish raw mosaics from color frames.
inline PngInfo probe_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open PNG: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to parse PNG header: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  PngInfo out;
  out.height = png_get_image_height(png, info);
  out.width = png_get_image_width(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  out.grayscale = png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY;
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

// 8-bit decode to RGB. Gray and palette images are expanded; alpha is
// stripped; 16-bit content is reduced.
inline RawImage8 read_png_rgb8(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open PNG: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed for " + path);
  }

  RawImage8 out;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode PNG: " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  out.height = png_get_image_height(png, info);
  out.width = png_get_image_width(png, info);
  if (png_get_rowbytes(png, info) != out.width * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unexpected PNG row layout in " + path);
  }
  out.rgb.resize(out.height * out.width * 3);
  row_ptrs.resize(out.height);
  for (std::size_t i = 0; i < out.height; ++i) row_ptrs[i] = out.rgb.data() + i * out.width * 3;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

inline void write_png_rgb8(const std::string& path, std::size_t height, std::size_t width,
                           const unsigned char* rgb) {
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open PNG for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed for " + path);
  }
  std::vector<png_bytep> row_ptrs(height);
  for (std::size_t i = 0; i < height; ++i)
    row_ptrs[i] = const_cast<png_bytep>(rgb + i * width * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// 16-bit grayscale, used for raw CFA bursts. Rejects anything else.
inline RawImage16 read_png_gray16(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open PNG: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed for " + path);
  }
  RawImage16 out;
  std::vector<unsigned char> bytes;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode 16-bit PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  if (png_get_bit_depth(png, info) != 16 || png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestError("raw CFA frames must be 16-bit grayscale PNG: " + path);
  }
  out.height = png_get_image_height(png, info);
  out.width = png_get_image_width(png, info);
  bytes.resize(out.height * out.width * 2);
  row_ptrs.resize(out.height);
  for (std::size_t i = 0; i < out.height; ++i) row_ptrs[i] = bytes.data() + i * out.width * 2;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out.gray.resize(out.height * out.width);
  for (std::size_t i = 0; i < out.gray.size(); ++i) {
    // PNG stores 16-bit samples big-endian
    out.gray[i] = static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  }
  return out;
}

inline void write_png_gray16(const std::string& path, std::size_t height, std::size_t width,
                             const std::uint16_t* gray) {
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open PNG for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed for " + path);
  }
  std::vector<unsigned char> bytes(height * width * 2);
  for (std::size_t i = 0; i < height * width; ++i) {
    bytes[2 * i] = static_cast<unsigned char>(gray[i] >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(gray[i] & 0xff);
  }
  std::vector<png_bytep> row_ptrs(height);
  for (std::size_t i = 0; i < height; ++i) row_ptrs[i] = bytes.data() + i * width * 2;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace nir
