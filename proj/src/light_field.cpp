// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#include "geoni/light_field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "geoni/png_io.hpp"

namespace geoni {

namespace fs = std::filesystem;
using nlohmann::json;

ShearHypothesisSet::ShearHypothesisSet(std::vector<double> v) : values(std::move(v)) {
  GEONI_REQUIRE(!values.empty(), "hypothesis set must be non-empty");
  for (size_t i = 1; i < values.size(); ++i)
    GEONI_REQUIRE(values[i - 1] < values[i], "hypothesis values must be strictly increasing");
  bool has_zero = std::any_of(values.begin(), values.end(), [](double d) { return d == 0.0; });
  GEONI_REQUIRE(has_zero, "hypothesis set must contain 0");
}

ShearHypothesisSet ShearHypothesisSet::parse(const std::string& text) {
  std::vector<double> v;
  try {
    if (text.rfind("range:", 0) == 0) {
      double lo = 0, hi = 0, step = 0;
      if (std::sscanf(text.c_str(), "range:%lf:%lf:%lf", &lo, &hi, &step) != 3 || step <= 0)
        throw Error("bad range");
      for (double d = lo; d <= hi + 1e-9; d += step) v.push_back(std::abs(d) < 1e-12 ? 0.0 : d);
    } else {
      size_t pos = 0;
      while (pos < text.size()) {
        size_t next = text.find(',', pos);
        if (next == std::string::npos) next = text.size();
        v.push_back(std::stod(text.substr(pos, next - pos)));
        pos = next + 1;
      }
    }
  } catch (const std::exception&) {
    throw Error("cannot parse hypothesis set '" + text + "'");
  }
  return ShearHypothesisSet(v);
}

int ShearHypothesisSet::index_of_zero() const {
  for (size_t i = 0; i < values.size(); ++i)
    if (values[i] == 0.0) return static_cast<int>(i);
  throw Error("hypothesis set lost its zero");
}

ValidityMask all_valid_mask(int X, int Y, int A) { return Tensor::ones({X, Y, A, 1}); }

// --- directory format -------------------------------------------------------

namespace {

std::string view_name(int s, int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "view_%02d_%02d.png", s, t);
  return buf;
}

}  // namespace

LightField4D load_lightfield(const std::string& dir) {
  GEONI_REQUIRE(fs::is_directory(dir), "not a directory: " + dir);

  int W = 0, H = 0, S = -1, T = -1, C = 0;
  std::string color_space;
  fs::path sidecar = fs::path(dir) / "lf.json";
  if (fs::exists(sidecar)) {
    std::ifstream in(sidecar);
    json j;
    try {
      in >> j;
      W = j.at("width").get<int>();
      H = j.at("height").get<int>();
      S = j.at("angular_s").get<int>();
      T = j.at("angular_t").get<int>();
      color_space = j.at("color_space").get<std::string>();
    } catch (const json::exception& e) {
      throw Error("malformed lf.json in " + dir + ": " + e.what());
    }
    GEONI_REQUIRE(color_space == "rgb" || color_space == "y",
                  "lf.json color_space must be rgb or y");
  } else {
    // Infer the grid from the filenames present.
    for (const auto& entry : fs::directory_iterator(dir)) {
      int s = -1, t = -1;
      if (std::sscanf(entry.path().filename().string().c_str(), "view_%d_%d.png", &s, &t) == 2) {
        S = std::max(S, s + 1);
        T = std::max(T, t + 1);
      }
    }
    GEONI_REQUIRE(S > 0 && T > 0, "no view_SS_TT.png files in " + dir);
  }

  LightField4D lf;
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      fs::path p = fs::path(dir) / view_name(s, t);
      if (!fs::exists(p)) throw Error("incomplete grid: missing " + view_name(s, t) + " in " + dir);
      Image img = read_png(p.string());
      if (W == 0) {
        W = img.width;
        H = img.height;
      }
      if (C == 0) {
        C = img.channels;
        if (color_space.empty()) color_space = C == 3 ? "rgb" : "y";
      }
      GEONI_REQUIRE(img.width == W && img.height == H,
                    "dimension mismatch in " + p.string());
      GEONI_REQUIRE(img.channels == C, "channel mismatch in " + p.string());
      if (lf.data.empty()) lf.data = Tensor({W, H, S, T, C});
      const double scale = 1.0 / img.max_value();
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const uint16_t* px = img.pixels.data() + (static_cast<size_t>(y) * W + x) * C;
          for (int c = 0; c < C; ++c) lf.data(x, y, s, t, c) = px[c] * scale;
        }
    }
  }
  GEONI_REQUIRE(!(color_space == "y" && C == 3), "lf.json says y but views have 3 channels");
  lf.color_space = color_space;
  return lf;
}

void save_lightfield(const std::string& dir, const LightField4D& lf) {
  fs::create_directories(dir);
  const int W = lf.width(), H = lf.height(), S = lf.angular_s(), T = lf.angular_t(),
            C = lf.channels();
  GEONI_REQUIRE((lf.color_space == "rgb" && C == 3) || (lf.color_space == "y" && C == 1),
                "color_space / channel mismatch");

  Image img;
  img.width = W;
  img.height = H;
  img.channels = C;
  img.bit_depth = C == 3 ? 8 : 16;
  img.pixels.resize(static_cast<size_t>(W) * H * C);
  const double scale = img.max_value();

  for (int t = 0; t < T; ++t)
    for (int s = 0; s < S; ++s) {
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          uint16_t* px = img.pixels.data() + (static_cast<size_t>(y) * W + x) * C;
          for (int c = 0; c < C; ++c) {
            double v = std::clamp(lf.data(x, y, s, t, c), 0.0, 1.0);
            px[c] = static_cast<uint16_t>(std::lround(v * scale));
          }
        }
      write_png((fs::path(dir) / view_name(s, t)).string(), img);
    }

  json j;
  j["width"] = W;
  j["height"] = H;
  j["angular_s"] = S;
  j["angular_t"] = T;
  j["color_space"] = lf.color_space;
  std::ofstream out(fs::path(dir) / "lf.json");
  out << j.dump(2) << "\n";
}

// --- color ------------------------------------------------------------------

LightField4D to_luminance(const LightField4D& lf) {
  if (lf.color_space == "y") return lf;
  GEONI_REQUIRE(lf.channels() == 3, "to_luminance expects rgb");
  LightField4D out;
  out.color_space = "y";
  out.data = Tensor({lf.width(), lf.height(), lf.angular_s(), lf.angular_t(), 1});
  const double* src = lf.data.data();
  double* dst = out.data.data();
  const long long n = out.data.size();
  for (long long i = 0; i < n; ++i) {
    const double* p = src + i * 3;
    dst[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return out;
}

Tensor rgb_to_ycbcr(const Tensor& rgb) {
  GEONI_REQUIRE(rgb.dim(rgb.ndim() - 1) == 3, "rgb_to_ycbcr expects 3 channels");
  Tensor out(rgb.dims());
  const long long n = rgb.size() / 3;
  for (long long i = 0; i < n; ++i) {
    const double* p = rgb.data() + i * 3;
    double y = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    double* q = out.data() + i * 3;
    q[0] = y;
    q[1] = (p[2] - y) / 1.772 + 0.5;
    q[2] = (p[0] - y) / 1.402 + 0.5;
  }
  return out;
}

Tensor ycbcr_to_rgb(const Tensor& ycbcr) {
  GEONI_REQUIRE(ycbcr.dim(ycbcr.ndim() - 1) == 3, "ycbcr_to_rgb expects 3 channels");
  Tensor out(ycbcr.dims());
  const long long n = ycbcr.size() / 3;
  for (long long i = 0; i < n; ++i) {
    const double* p = ycbcr.data() + i * 3;
    double y = p[0], cb = p[1] - 0.5, cr = p[2] - 0.5;
    double r = y + 1.402 * cr;
    double b = y + 1.772 * cb;
    double g = (y - 0.299 * r - 0.114 * b) / 0.587;
    double* q = out.data() + i * 3;
    q[0] = r;
    q[1] = g;
    q[2] = b;
  }
  return out;
}

// --- slicing ----------------------------------------------------------------

std::vector<LightFieldSlice> extract_slices(const LightField4D& lf, SliceAxis axis) {
  const int W = lf.width(), H = lf.height(), S = lf.angular_s(), T = lf.angular_t(),
            C = lf.channels();
  std::vector<LightFieldSlice> out;
  if (axis == SliceAxis::S) {
    out.reserve(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
      LightFieldSlice sl;
      sl.data = Tensor({W, H, S, C});
      for (int x = 0; x < W; ++x)
        for (int y = 0; y < H; ++y)
          for (int s = 0; s < S; ++s)
            for (int c = 0; c < C; ++c) sl.data(x, y, s, c) = lf.data(x, y, s, t, c);
      out.push_back(std::move(sl));
    }
  } else {
    out.reserve(static_cast<size_t>(S));
    for (int s = 0; s < S; ++s) {
      LightFieldSlice sl;
      sl.data = Tensor({H, W, T, C});
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int t = 0; t < T; ++t)
            for (int c = 0; c < C; ++c) sl.data(y, x, t, c) = lf.data(x, y, s, t, c);
      out.push_back(std::move(sl));
    }
  }
  return out;
}

LightField4D reassemble_slices(const std::vector<LightFieldSlice>& slices, SliceAxis axis,
                               const std::string& color_space) {
  GEONI_REQUIRE(!slices.empty(), "reassemble_slices: no slices");
  const Tensor& first = slices.front().data;
  for (const auto& sl : slices)
    GEONI_REQUIRE(sl.data.same_shape(first), "reassemble_slices: shape mismatch");

  LightField4D lf;
  lf.color_space = color_space;
  const int C = first.dim(3);
  if (axis == SliceAxis::S) {
    const int W = first.dim(0), H = first.dim(1), S = first.dim(2);
    const int T = static_cast<int>(slices.size());
    lf.data = Tensor({W, H, S, T, C});
    for (int t = 0; t < T; ++t)
      for (int x = 0; x < W; ++x)
        for (int y = 0; y < H; ++y)
          for (int s = 0; s < S; ++s)
            for (int c = 0; c < C; ++c) lf.data(x, y, s, t, c) = slices[t].data(x, y, s, c);
  } else {
    const int H = first.dim(0), W = first.dim(1), T = first.dim(2);
    const int S = static_cast<int>(slices.size());
    lf.data = Tensor({W, H, S, T, C});
    for (int s = 0; s < S; ++s)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int t = 0; t < T; ++t)
            for (int c = 0; c < C; ++c) lf.data(x, y, s, t, c) = slices[s].data(y, x, t, c);
  }
  return lf;
}

Tensor extract_epi(const LightFieldSlice& slice, int y) {
  GEONI_REQUIRE(slice.channels() == 1, "extract_epi expects a single-channel slice");
  GEONI_REQUIRE(y >= 0 && y < slice.height(), "extract_epi: y out of range");
  const int X = slice.width(), A = slice.angular();
  Tensor epi({X, A});
  for (int x = 0; x < X; ++x)
    for (int a = 0; a < A; ++a) epi(x, a) = slice.data(x, y, a, 0);
  return epi;
}

// --- shearing ---------------------------------------------------------------

LightFieldSlice shear_with_center(const LightFieldSlice& slice, double amount, double center) {
  const int X = slice.width(), Y = slice.height(), A = slice.angular(), C = slice.channels();
  const bool has_mask = !slice.mask.empty();
  if (has_mask)
    GEONI_REQUIRE(slice.mask.dim(0) == X && slice.mask.dim(1) == Y && slice.mask.dim(2) == A,
                  "shear: mask shape mismatch");

  LightFieldSlice out;
  out.data = Tensor({X, Y, A, C});
  out.mask = Tensor({X, Y, A, 1});

  for (int a = 0; a < A; ++a) {
    const double shift = (a - center) * amount;
    const double floor_shift = std::floor(shift);
    const int ishift = static_cast<int>(floor_shift);
    const double f = shift - floor_shift;
    const bool single_tap = (f == 0.0);
    for (int x = 0; x < X; ++x) {
      const int x0 = x + ishift;
      const int x1 = x0 + 1;
      const bool in_range = single_tap ? (x0 >= 0 && x0 < X) : (x0 >= 0 && x1 < X);
      for (int y = 0; y < Y; ++y) {
        bool valid = in_range;
        if (valid && has_mask)
          valid = single_tap ? slice.mask(x0, y, a, 0) != 0.0
                             : slice.mask(x0, y, a, 0) != 0.0 && slice.mask(x1, y, a, 0) != 0.0;
        out.mask(x, y, a, 0) = valid ? 1.0 : 0.0;
        if (!valid) {
          for (int c = 0; c < C; ++c) out.data(x, y, a, c) = 0.0;
        } else if (single_tap) {
          for (int c = 0; c < C; ++c) out.data(x, y, a, c) = slice.data(x0, y, a, c);
        } else {
          for (int c = 0; c < C; ++c)
            out.data(x, y, a, c) =
                (1.0 - f) * slice.data(x0, y, a, c) + f * slice.data(x1, y, a, c);
        }
      }
    }
  }
  return out;
}

LightFieldSlice shear(const LightFieldSlice& slice, double d) {
  return shear_with_center(slice, d, slice.angular() / 2.0);
}

LightFieldSlice inverse_shear(const LightFieldSlice& slice, double d, int alpha) {
  GEONI_REQUIRE(alpha >= 1, "inverse_shear: alpha must be >= 1");
  const double center = (slice.angular() + alpha - 1) / 2.0;
  return shear_with_center(slice, -d / alpha, center);
}

}  // namespace geoni
