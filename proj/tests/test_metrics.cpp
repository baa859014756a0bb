// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#include <doctest/doctest.h>

#include <cmath>
#include <limits>

#include "geoni/metrics.hpp"
#include "geoni/rng.hpp"

using namespace geoni;

namespace {

// Deterministic smooth test pair; values frozen against an independent
// reference implementation of SSIM/PSNR.
void reference_pair(Tensor& a, Tensor& b) {
  const int X = 24, Y = 20;
  a = Tensor({X, Y, 1});
  b = Tensor({X, Y, 1});
  for (int x = 0; x < X; ++x)
    for (int y = 0; y < Y; ++y) {
      double va = 0.5 + 0.3 * std::sin(0.7 * x + 0.3 * y) + 0.15 * std::cos(1.3 * y - 0.2 * x);
      double vb = va + 0.08 * std::sin(0.9 * x - 0.5 * y) + 0.02;
      a(x, y, 0) = std::clamp(va, 0.0, 1.0);
      b(x, y, 0) = std::clamp(vb, 0.0, 1.0);
    }
}

}  // namespace

TEST_CASE("psnr of a constant offset is analytic") {
  Tensor a = Tensor::full({8, 8, 1}, 0.5);
  Tensor b = Tensor::full({8, 8, 1}, 0.6);
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("psnr of identical tensors is +inf") {
  Tensor a = Tensor::full({4, 4, 1}, 0.3);
  CHECK(std::isinf(psnr(a, a)));
  CHECK(psnr(a, a) > 0);
}

TEST_CASE("psnr and ssim match the frozen reference values") {
  Tensor a, b;
  reference_pair(a, b);
  CHECK(psnr(a, b) == doctest::Approx(24.52735205624361).epsilon(1e-9));
  CHECK(ssim(a, b) == doctest::Approx(0.9661195208163317).epsilon(1e-9));
}

TEST_CASE("masked psnr ignores invalid samples") {
  Tensor a = Tensor::full({2, 2, 1}, 0.5);
  Tensor b = a;
  b(0, 0, 0) = 1.0;   // error only here
  b(1, 1, 0) = 0.25;  // and here
  Tensor mask = Tensor::ones({2, 2, 1});
  mask(0, 0, 0) = 0.0;
  // remaining error: one sample at 0.25^2 over 3 valid samples
  const double mse = 0.25 * 0.25 / 3.0;
  CHECK(psnr(a, b, mask) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(a, b, Tensor({2, 2, 1})), Error);
}

TEST_CASE("ssim is 1 for identical images and drops with noise") {
  Tensor a, b;
  reference_pair(a, b);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  Rng rng(3);
  Tensor noisy = a;
  for (long long i = 0; i < noisy.size(); ++i) noisy.data()[i] += 0.2 * (rng.uniform() - 0.5);
  CHECK(ssim(a, noisy) < ssim(a, b));
}

TEST_CASE("ssim averages over views") {
  Tensor a, b;
  reference_pair(a, b);
  Tensor two_a({24, 20, 2, 1}), two_mix({24, 20, 2, 1});
  for (int x = 0; x < 24; ++x)
    for (int y = 0; y < 20; ++y) {
      two_a(x, y, 0, 0) = a(x, y, 0);
      two_a(x, y, 1, 0) = a(x, y, 0);
      two_mix(x, y, 0, 0) = a(x, y, 0);
      two_mix(x, y, 1, 0) = b(x, y, 0);
    }
  const double expected = 0.5 * (1.0 + ssim(a, b));
  CHECK(ssim(two_a, two_mix) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("views smaller than the window fall back to one global window") {
  Tensor a({4, 4, 1}), b({4, 4, 1});
  Rng rng(9);
  for (long long i = 0; i < a.size(); ++i) {
    a.data()[i] = rng.uniform();
    b.data()[i] = rng.uniform();
  }
  // straight-line uniform-window SSIM over all samples
  const long long n = a.size();
  double ma = 0, mb = 0;
  for (long long i = 0; i < n; ++i) {
    ma += a.data()[i];
    mb += b.data()[i];
  }
  ma /= n;
  mb /= n;
  double va = 0, vb = 0, cov = 0;
  for (long long i = 0; i < n; ++i) {
    va += (a.data()[i] - ma) * (a.data()[i] - ma);
    vb += (b.data()[i] - mb) * (b.data()[i] - mb);
    cov += (a.data()[i] - ma) * (b.data()[i] - mb);
  }
  va /= n;
  vb /= n;
  cov /= n;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const double expected =
      ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  CHECK(ssim(a, b) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("masked l1 counts only valid entries") {
  Tensor a = Tensor::full({2, 2, 1}, 0.0);
  Tensor b = Tensor::full({2, 2, 1}, 1.0);
  b(0, 0, 0) = 0.5;
  Tensor mask = Tensor::ones({2, 2, 1});
  mask(0, 1, 0) = 0.0;
  CHECK(masked_l1(a, b) == doctest::Approx((0.5 + 3.0) / 4.0));
  CHECK(masked_l1(a, b, mask) == doctest::Approx((0.5 + 2.0) / 3.0));
}
