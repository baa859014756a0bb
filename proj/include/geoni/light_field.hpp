// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "geoni/tensor.hpp"

namespace geoni {

// 4D light field L(x, y, s, t) with an optional channel axis.
// data dims: (X, Y, S, T, C), C = 1 (luma) or 3.
struct LightField4D {
  Tensor data;
  std::string color_space;  // "rgb" or "y"

  int width() const { return data.dim(0); }
  int height() const { return data.dim(1); }
  int angular_s() const { return data.dim(2); }
  int angular_t() const { return data.dim(3); }
  int channels() const { return data.dim(4); }
};

// 3D slice: two spatial axes + one angular axis. The first spatial axis is
// always the one the shear moves, so t-slices are stored transposed.
// data dims: (X, Y, A, C); mask dims: (X, Y, A, 1).
struct LightFieldSlice {
  Tensor data;
  ValidityMask mask;  // empty = everything valid

  int width() const { return data.dim(0); }
  int height() const { return data.dim(1); }
  int angular() const { return data.dim(2); }
  int channels() const { return data.dim(3); }
};

enum class SliceAxis { S, T };

// Strictly increasing shear hypothesis values; must contain 0.
struct ShearHypothesisSet {
  std::vector<double> values;

  explicit ShearHypothesisSet(std::vector<double> v);
  // "comma,separated,values" or "range:lo:hi:step" (inclusive endpoints).
  static ShearHypothesisSet parse(const std::string& text);

  int count() const { return static_cast<int>(values.size()); }
  int index_of_zero() const;
};

ValidityMask all_valid_mask(int X, int Y, int A);

// --- directory format -------------------------------------------------------

// Reads view_{s:02d}_{t:02d}.png plus the lf.json sidecar. If the sidecar is
// missing the grid is inferred from the filenames present. Pixels are scaled
// to [0,1] doubles.
LightField4D load_lightfield(const std::string& dir);

// Writes views plus lf.json. rgb goes out as 8-bit color PNG, y as 16-bit
// grayscale so a save/load round trip keeps metric-relevant precision.
void save_lightfield(const std::string& dir, const LightField4D& lf);

// --- color ------------------------------------------------------------------

// BT.601 luma: Y = 0.299 R + 0.587 G + 0.114 B. Pass-through if already "y".
LightField4D to_luminance(const LightField4D& lf);

// Full-range BT.601 YCbCr. Shapes (..., 3) in both directions.
Tensor rgb_to_ycbcr(const Tensor& rgb);
Tensor ycbcr_to_rgb(const Tensor& ycbcr);

// --- slicing ----------------------------------------------------------------

// SliceAxis::S: one slice per t, data(x, y, s, c).
// SliceAxis::T: one slice per s, data(y, x, t, c) (spatial axes swapped so
// the sheared axis comes first).
std::vector<LightFieldSlice> extract_slices(const LightField4D& lf, SliceAxis axis);

// Inverse of extract_slices; `other_angular` slices of matching shape.
LightField4D reassemble_slices(const std::vector<LightFieldSlice>& slices, SliceAxis axis,
                               const std::string& color_space);

// Epipolar-plane image B(x, s) = slice(x, y*, s); single-channel slices.
Tensor extract_epi(const LightFieldSlice& slice, int y);

// --- shearing ---------------------------------------------------------------

// out(x, y, a) = in(x + (a - center) * amount, y, a), linear interpolation
// along x, zero fill outside. An output sample is valid iff every
// interpolation tap it reads is in range and valid; integer shifts read one
// tap, so amount 0 is a bit-exact identity. Result always carries a mask.
LightFieldSlice shear_with_center(const LightFieldSlice& slice, double amount, double center);

// Shear about the slice's A/2 center.
LightFieldSlice shear(const LightFieldSlice& slice, double d);

// Undo of shear-by-d after the angular axis was upsampled by alpha: shears by
// -d/alpha centered where the original slice's S/2 center landed on the
// upsampled grid, i.e. (A' + alpha - 1) / 2. For alpha = 1 this is shear(-d).
LightFieldSlice inverse_shear(const LightFieldSlice& slice, double d, int alpha);

}  // namespace geoni
