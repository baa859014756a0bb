// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#include "geoni/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "geoni/metrics.hpp"

namespace geoni {

using nlohmann::json;

namespace {

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

double EvalReport::mean_psnr() const {
  std::vector<double> v;
  for (const EvalEntry& e : entries) v.push_back(e.psnr_db);
  return v.empty() ? 0.0 : mean_of(v);
}

double EvalReport::mean_ssim() const {
  std::vector<double> v;
  for (const EvalEntry& e : entries) v.push_back(e.ssim);
  return v.empty() ? 0.0 : mean_of(v);
}

EvalEntry evaluate(const LightField4D& recon, const LightField4D& truth,
                   const std::vector<std::pair<int, int>>& input_positions,
                   const std::string& scene, int scale, int border_crop) {
  GEONI_REQUIRE(recon.data.same_shape(truth.data), "evaluate: shape mismatch");
  const LightField4D ry = recon.channels() == 1 ? recon : to_luminance(recon);
  const LightField4D ty = truth.channels() == 1 ? truth : to_luminance(truth);

  const int X = ry.width(), Y = ry.height();
  GEONI_REQUIRE(2 * border_crop < X && 2 * border_crop < Y, "evaluate: crop exceeds image");
  const int Xc = X - 2 * border_crop, Yc = Y - 2 * border_crop;

  auto is_input = [&](int s, int t) {
    for (const auto& [ps, pt] : input_positions)
      if (ps == s && pt == t) return true;
    return false;
  };

  std::vector<double> psnrs, ssims;
  Tensor rv({Xc, Yc, 1}), tv({Xc, Yc, 1});
  for (int s = 0; s < ry.angular_s(); ++s)
    for (int t = 0; t < ry.angular_t(); ++t) {
      if (is_input(s, t)) continue;
      for (int x = 0; x < Xc; ++x)
        for (int y = 0; y < Yc; ++y) {
          rv(x, y, 0) = ry.data(x + border_crop, y + border_crop, s, t, 0);
          tv(x, y, 0) = ty.data(x + border_crop, y + border_crop, s, t, 0);
        }
      psnrs.push_back(psnr(rv, tv));
      ssims.push_back(ssim(rv, tv));
    }
  GEONI_REQUIRE(!psnrs.empty(), "evaluate: no synthesized views to score");

  EvalEntry e;
  e.scene = scene;
  e.scale = scale;
  e.psnr_db = mean_of(psnrs);
  e.ssim = mean_of(ssims);
  return e;
}

void write_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  GEONI_REQUIRE(out.good(), "cannot write " + path);
  out << "scene,scale,psnr_db,ssim\n";
  for (const EvalEntry& e : report.entries)
    out << e.scene << "," << e.scale << "," << format_metric(e.psnr_db) << ","
        << format_metric(e.ssim) << "\n";
}

void write_json(const EvalReport& report, const std::string& path,
                const std::string& config_echo_json) {
  json doc;
  doc["config"] = config_echo_json.empty() ? json::object() : json::parse(config_echo_json);
  doc["entries"] = json::array();
  for (const EvalEntry& e : report.entries) {
    json je;
    je["scene"] = e.scene;
    je["scale"] = e.scale;
    je["psnr_db"] = std::isinf(e.psnr_db) ? json() : json(e.psnr_db);
    je["ssim"] = e.ssim;
    doc["entries"].push_back(je);
  }
  doc["mean_psnr_db"] = std::isinf(report.mean_psnr()) ? json() : json(report.mean_psnr());
  doc["mean_ssim"] = report.mean_ssim();
  std::ofstream out(path);
  GEONI_REQUIRE(out.good(), "cannot write " + path);
  out << doc.dump(2) << "\n";
}

ShearHypothesisSet hypotheses_for_range(double lo, double hi, double step) {
  GEONI_REQUIRE(step > 0.0, "hypothesis step must be positive");
  GEONI_REQUIRE(lo <= 0.0 && hi >= 0.0, "shear range must contain 0");
  std::vector<double> v;
  for (long long k = static_cast<long long>(std::ceil(lo / step));
       k <= static_cast<long long>(std::floor(hi / step)); ++k)
    v.push_back(static_cast<double>(k) * step);
  return ShearHypothesisSet(v);
}

std::vector<SweepPoint> sweep_shear_range(const LightFieldSlice& input,
                                          const LightFieldSlice& truth,
                                          const std::vector<std::pair<double, double>>& ranges,
                                          const NiNetwork* ni, const DibrNetwork* dibr,
                                          const PipelineConfig& cfg, double step) {
  GEONI_REQUIRE(!ranges.empty(), "sweep: no ranges");

  // Every range is scored over the same pixel set -- synthesized views that
  // are valid under every hypothesis of every range -- so rows differ only in
  // reconstruction quality, never in measured area.
  std::vector<Tensor> recons;
  Tensor mask = Tensor::ones(truth.data.dims());
  for (const auto& [lo, hi] : ranges) {
    ShearHypothesisSet D = hypotheses_for_range(lo, hi, step);
    ReconstructResult r = reconstruct_slice(input, D, ni, dibr, cfg);
    GEONI_REQUIRE(r.slice.data.same_shape(truth.data), "sweep: truth shape mismatch");
    const long long chunk = r.stack.masks.size() / D.count();
    for (long long i = 0; i < mask.size(); ++i)
      for (int d = 0; d < D.count(); ++d)
        if (r.stack.masks.data()[d * chunk + i] == 0.0) {
          mask.data()[i] = 0.0;
          break;
        }
    recons.push_back(std::move(r.slice.data));
  }
  for (int x = 0; x < truth.width(); ++x)
    for (int y = 0; y < truth.height(); ++y)
      for (int a = 0; a < truth.angular(); a += cfg.alpha) mask(x, y, a, 0) = 0.0;

  std::vector<SweepPoint> points;
  for (size_t k = 0; k < ranges.size(); ++k)
    points.push_back(SweepPoint{ranges[k].first, ranges[k].second,
                                psnr(recons[k], truth.data, mask)});
  std::sort(points.begin(), points.end(), [](const SweepPoint& a, const SweepPoint& b) {
    return std::make_pair(a.hi - a.lo, a.lo) < std::make_pair(b.hi - b.lo, b.lo);
  });
  return points;
}

void write_sweep_csv(const std::vector<SweepPoint>& points, const std::string& path) {
  std::ofstream out(path);
  GEONI_REQUIRE(out.good(), "cannot write " + path);
  out << "range_lo,range_hi,psnr_db\n";
  for (const SweepPoint& p : points)
    out << p.lo << "," << p.hi << "," << format_metric(p.psnr_db) << "\n";
}

}  // namespace geoni
