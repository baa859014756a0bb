// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "geoni/pipeline.hpp"

namespace geoni {

struct EvalEntry {
  std::string scene;
  int scale = 0;  // angular upsampling factor the entry was produced at
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<EvalEntry> entries;

  double mean_psnr() const;
  double mean_ssim() const;
};

// Per-view PSNR/SSIM on the luminance channel, averaged over synthesized
// views only; (s, t) pairs in input_positions are excluded from scoring.
// border_crop trims that many pixels from each spatial edge first.
EvalEntry evaluate(const LightField4D& recon, const LightField4D& truth,
                   const std::vector<std::pair<int, int>>& input_positions,
                   const std::string& scene = "", int scale = 0, int border_crop = 0);

void write_csv(const EvalReport& report, const std::string& path);
void write_json(const EvalReport& report, const std::string& path,
                const std::string& config_echo_json);

// One blended reconstruction per shear range [lo, hi], hypotheses sampled
// every `step` pixels (0 always included). PSNR is measured on synthesized
// views of the slice against the truth.
struct SweepPoint {
  double lo = 0.0;
  double hi = 0.0;
  double psnr_db = 0.0;
};

std::vector<SweepPoint> sweep_shear_range(const LightFieldSlice& input,
                                          const LightFieldSlice& truth,
                                          const std::vector<std::pair<double, double>>& ranges,
                                          const NiNetwork* ni, const DibrNetwork* dibr,
                                          const PipelineConfig& cfg, double step = 4.0);

void write_sweep_csv(const std::vector<SweepPoint>& points, const std::string& path);

// Hypothesis grid for a range: multiples of `step` within [lo, hi].
ShearHypothesisSet hypotheses_for_range(double lo, double hi, double step);

}  // namespace geoni
