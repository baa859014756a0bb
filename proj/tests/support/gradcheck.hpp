// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "geoni/tensor.hpp"

namespace geoni::testsupport {

struct GradCheckResult {
  double max_rel = 0.0;
  long long checked = 0;
};

// Central-difference check of every entry of `params` against `analytic`.
// `eval` must recompute the scalar objective from the current parameter
// values. Relative error uses |a - n| / max(|a| + |n|, floor); entries where
// both sides are ~0 are counted but cannot fail.
inline GradCheckResult finite_difference_check(const std::function<double()>& eval,
                                               const std::vector<Tensor*>& params,
                                               const std::vector<const Tensor*>& analytic,
                                               double h = 1e-5, double floor = 1e-7) {
  GradCheckResult res;
  for (size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    for (long long i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      const double step = h * std::max(1.0, std::abs(saved));
      p.data()[i] = saved + step;
      const double up = eval();
      p.data()[i] = saved - step;
      const double down = eval();
      p.data()[i] = saved;

      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k]->empty() ? 0.0 : analytic[k]->data()[i];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor);
      res.max_rel = std::max(res.max_rel, rel);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace geoni::testsupport
