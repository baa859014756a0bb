// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "geoni/tensor.hpp"

namespace geoni {

// PSNR in dB against a [0,1] peak, over every valid sample (global MSE).
// Returns +infinity when the MSE is exactly 0. Mask may be empty (all valid);
// otherwise it must have one entry per sample position (channel axis 1).
double psnr(const Tensor& x, const Tensor& ref, const ValidityMask& mask = {});

// Mean SSIM with an 11x11 Gaussian window (sigma 1.5, K1 0.01, K2 0.03),
// valid-border handling, averaged over all trailing view axes. Tensors are
// read as (X, Y, views..., 1). A masked window counts only if every tap is
// valid. Views smaller than the window fall back to one global window.
double ssim(const Tensor& x, const Tensor& ref, const ValidityMask& mask = {});

// Mean absolute difference over valid samples.
double masked_l1(const Tensor& x, const Tensor& ref, const ValidityMask& mask = {});

}  // namespace geoni
