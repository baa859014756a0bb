// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#include "geoni/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "geoni/error.hpp"

namespace geoni {
namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  GEONI_REQUIRE(fp != nullptr, "cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  GEONI_REQUIRE(png, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("failed to decode " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color_type = 0;
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);

  // Normalize exotic layouts to 8/16-bit gray or rgb.
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);  // file is big-endian, host is little
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  int channels = png_get_channels(png, info);
  if (!((channels == 1 || channels == 3) && (bit_depth == 8 || bit_depth == 16))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("unsupported png layout in " + path);
  }

  Image img;
  img.width = static_cast<int>(width);
  img.height = static_cast<int>(height);
  img.channels = channels;
  img.bit_depth = bit_depth;
  img.pixels.resize(static_cast<size_t>(width) * height * channels);

  std::vector<uint8_t> row_bytes(png_get_rowbytes(png, info));
  for (png_uint_32 y = 0; y < height; ++y) {
    png_read_row(png, row_bytes.data(), nullptr);
    uint16_t* dst = img.pixels.data() + static_cast<size_t>(y) * width * channels;
    if (bit_depth == 8) {
      for (size_t i = 0; i < static_cast<size_t>(width) * channels; ++i) dst[i] = row_bytes[i];
    } else {
      const uint16_t* src = reinterpret_cast<const uint16_t*>(row_bytes.data());
      for (size_t i = 0; i < static_cast<size_t>(width) * channels; ++i) dst[i] = src[i];
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const Image& image) {
  GEONI_REQUIRE(image.channels == 1 || image.channels == 3, "png write: 1 or 3 channels");
  GEONI_REQUIRE(image.bit_depth == 8 || image.bit_depth == 16, "png write: 8 or 16 bit");
  GEONI_REQUIRE(image.pixels.size() ==
                    static_cast<size_t>(image.width) * image.height * image.channels,
                "png write: pixel buffer size mismatch");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  GEONI_REQUIRE(fp != nullptr, "cannot open " + path + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  GEONI_REQUIRE(png, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed to encode " + path);
  }

  png_init_io(png, fp.get());
  int color_type = image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), image.bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (image.bit_depth == 16) png_set_swap(png);

  const size_t row_elems = static_cast<size_t>(image.width) * image.channels;
  if (image.bit_depth == 8) {
    std::vector<uint8_t> row(row_elems);
    for (int y = 0; y < image.height; ++y) {
      const uint16_t* src = image.pixels.data() + static_cast<size_t>(y) * row_elems;
      for (size_t i = 0; i < row_elems; ++i) row[i] = static_cast<uint8_t>(src[i] & 0xff);
      png_write_row(png, row.data());
    }
  } else {
    for (int y = 0; y < image.height; ++y) {
      const uint16_t* src = image.pixels.data() + static_cast<size_t>(y) * row_elems;
      png_write_row(png, reinterpret_cast<png_const_bytep>(src));
    }
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace geoni
