// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#include "geoni/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace geoni {

namespace {

void check_pair(const Tensor& x, const Tensor& ref, const ValidityMask& mask) {
  GEONI_REQUIRE(x.same_shape(ref), "metric inputs must share a shape");
  if (!mask.empty()) {
    long long samples = x.size() / x.dim(x.ndim() - 1);
    GEONI_REQUIRE(mask.size() == samples, "mask must have one entry per sample");
  }
}

}  // namespace

double psnr(const Tensor& x, const Tensor& ref, const ValidityMask& mask) {
  check_pair(x, ref, mask);
  const int C = x.dim(x.ndim() - 1);
  const long long samples = x.size() / C;
  double se = 0.0;
  long long count = 0;
  for (long long i = 0; i < samples; ++i) {
    if (!mask.empty() && mask.data()[i] == 0.0) continue;
    for (int c = 0; c < C; ++c) {
      double d = x.data()[i * C + c] - ref.data()[i * C + c];
      se += d * d;
    }
    count += C;
  }
  GEONI_REQUIRE(count > 0, "psnr: no valid samples");
  double mse = se / static_cast<double>(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double masked_l1(const Tensor& x, const Tensor& ref, const ValidityMask& mask) {
  check_pair(x, ref, mask);
  const int C = x.dim(x.ndim() - 1);
  const long long samples = x.size() / C;
  double acc = 0.0;
  long long count = 0;
  for (long long i = 0; i < samples; ++i) {
    if (!mask.empty() && mask.data()[i] == 0.0) continue;
    for (int c = 0; c < C; ++c) acc += std::abs(x.data()[i * C + c] - ref.data()[i * C + c]);
    count += C;
  }
  GEONI_REQUIRE(count > 0, "masked_l1: no valid samples");
  return acc / static_cast<double>(count);
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& gaussian_window() {
  static const std::vector<double> w = [] {
    std::vector<double> g(kWin * kWin);
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i)
      for (int j = 0; j < kWin; ++j) {
        double di = i - (kWin - 1) / 2.0, dj = j - (kWin - 1) / 2.0;
        g[i * kWin + j] = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
        sum += g[i * kWin + j];
      }
    for (double& v : g) v /= sum;
    return g;
  }();
  return w;
}

double ssim_from_moments(double mx, double my, double xx, double yy, double xy) {
  double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
  return ((2.0 * mx * my + kC1) * (2.0 * cov + kC2)) /
         ((mx * mx + my * my + kC1) * (vx + vy + kC2));
}

// One (X, Y) view; strides give the step along each spatial axis into the
// flat buffers. Returns {sum, window count}.
struct ViewAccum {
  double sum = 0.0;
  long long windows = 0;
};

ViewAccum ssim_view(const double* x, const double* y, const double* m, long long sx, long long sy,
                    int X, int Y) {
  ViewAccum acc;
  const auto& w = gaussian_window();
  if (X >= kWin && Y >= kWin) {
    for (int ox = 0; ox + kWin <= X; ++ox)
      for (int oy = 0; oy + kWin <= Y; ++oy) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        bool ok = true;
        for (int i = 0; i < kWin && ok; ++i)
          for (int j = 0; j < kWin; ++j) {
            long long off = (ox + i) * sx + (oy + j) * sy;
            if (m && m[off] == 0.0) {
              ok = false;
              break;
            }
            double a = x[off], b = y[off], g = w[i * kWin + j];
            mx += g * a;
            my += g * b;
            xx += g * a * a;
            yy += g * b * b;
            xy += g * a * b;
          }
        if (!ok) continue;
        acc.sum += ssim_from_moments(mx, my, xx, yy, xy);
        acc.windows += 1;
      }
    return acc;
  }
  // Degenerate view: single uniform window over whatever is valid.
  double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
  long long n = 0;
  for (int i = 0; i < X; ++i)
    for (int j = 0; j < Y; ++j) {
      long long off = i * sx + j * sy;
      if (m && m[off] == 0.0) continue;
      double a = x[off], b = y[off];
      mx += a;
      my += b;
      xx += a * a;
      yy += b * b;
      xy += a * b;
      ++n;
    }
  if (n == 0) return acc;
  mx /= n;
  my /= n;
  xx /= n;
  yy /= n;
  xy /= n;
  acc.sum += ssim_from_moments(mx, my, xx, yy, xy);
  acc.windows = 1;
  return acc;
}

}  // namespace

double ssim(const Tensor& x, const Tensor& ref, const ValidityMask& mask) {
  check_pair(x, ref, mask);
  GEONI_REQUIRE(x.ndim() >= 3, "ssim expects (X, Y, views..., C)");
  GEONI_REQUIRE(x.dim(x.ndim() - 1) == 1, "ssim expects a single channel");
  const int X = x.dim(0), Y = x.dim(1);
  long long views = 1;
  for (int i = 2; i < x.ndim() - 1; ++i) views *= x.dim(i);

  const long long sx = static_cast<long long>(Y) * views;  // step along X
  const long long sy = views;                              // step along Y
  double total = 0.0;
  long long windows = 0;
  for (long long v = 0; v < views; ++v) {
    ViewAccum acc = ssim_view(x.data() + v, ref.data() + v, mask.empty() ? nullptr : mask.data() + v,
                              sx, sy, X, Y);
    total += acc.sum;
    windows += acc.windows;
  }
  GEONI_REQUIRE(windows > 0, "ssim: no valid windows");
  return total / static_cast<double>(windows);
}

}  // namespace geoni
