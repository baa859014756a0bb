// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace geoni {

// Decoded image, row-major, channel-interleaved, values already widened to
// 16 bits of storage (8-bit files keep their 0..255 range; check bit_depth).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (gray) or 3 (rgb)
  int bit_depth = 0; // 8 or 16
  std::vector<uint16_t> pixels;

  double max_value() const { return bit_depth == 16 ? 65535.0 : 255.0; }
};

Image read_png(const std::string& path);

// channels inferred from image.channels; bit_depth must be 8 or 16.
void write_png(const std::string& path, const Image& image);

}  // namespace geoni
