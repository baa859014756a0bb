// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#include "geoni/dataset.hpp"

#include <utility>

#include "geoni/rng.hpp"

namespace geoni {

namespace {

// First `views` angular positions of a slice.
LightFieldSlice take_views(const LightFieldSlice& s, int views) {
  LightFieldSlice out;
  out.data = Tensor({s.width(), s.height(), views, 1});
  out.mask = Tensor({s.width(), s.height(), views, 1});
  const Tensor ones = s.mask.empty() ? Tensor::ones(s.data.dims()) : s.mask;
  for (int x = 0; x < s.width(); ++x)
    for (int y = 0; y < s.height(); ++y)
      for (int a = 0; a < views; ++a) {
        out.data(x, y, a, 0) = s.data(x, y, a, 0);
        out.mask(x, y, a, 0) = ones(x, y, a, 0);
      }
  return out;
}

}  // namespace

Dataset::Dataset(const std::vector<LightField4D>& sources, const TrainConfig& cfg) : cfg_(cfg) {
  GEONI_REQUIRE(cfg.batch_size >= 1, "batch size must be >= 1");
  GEONI_REQUIRE(cfg.patch_width % 4 == 0, "patch width must be divisible by 4");
  const int A_out = cfg.label_views();

  for (const LightField4D& lf : sources) {
    GEONI_REQUIRE(lf.channels() == 1, "training sources must be luminance");
    GEONI_REQUIRE(std::max(lf.angular_s(), lf.angular_t()) >= A_out,
                  "source light field has too few views");
    for (SliceAxis axis : {SliceAxis::S, SliceAxis::T}) {
      const int count = axis == SliceAxis::S ? lf.angular_s() : lf.angular_t();
      if (count < A_out) continue;
      for (const LightFieldSlice& full : extract_slices(lf, axis)) {
        LightFieldSlice label = take_views(full, A_out);
        std::vector<LightFieldSlice> variants{label};
        for (double d : cfg.augment_shears) variants.push_back(shear(label, d));
        for (LightFieldSlice& v : variants)
          slices_.push_back(SliceEntry{std::move(v.data), std::move(v.mask)});
      }
    }
  }

  for (int si = 0; si < static_cast<int>(slices_.size()); ++si) {
    const Tensor& data = slices_[static_cast<size_t>(si)].data;
    for (int x0 = 0; x0 + cfg.patch_width <= data.dim(0); x0 += cfg.patch_stride)
      for (int y0 = 0; y0 + cfg.patch_height <= data.dim(1); y0 += cfg.patch_stride)
        patches_.push_back(PatchRef{si, x0, y0});
  }
  GEONI_REQUIRE(!patches_.empty(), "dataset is empty: sources too small for the patch size");
}

TrainSample Dataset::sample(long long index) const {
  GEONI_REQUIRE(index >= 0 && index < size(), "dataset index out of range");
  const PatchRef& p = patches_[static_cast<size_t>(index)];
  const SliceEntry& e = slices_[static_cast<size_t>(p.slice)];
  const int A_out = cfg_.label_views();
  const int A_in = cfg_.input_views;

  TrainSample s;
  s.label = Tensor({cfg_.patch_width, cfg_.patch_height, A_out, 1});
  s.label_mask = Tensor(s.label.dims());
  for (int x = 0; x < cfg_.patch_width; ++x)
    for (int y = 0; y < cfg_.patch_height; ++y)
      for (int a = 0; a < A_out; ++a) {
        s.label(x, y, a, 0) = e.data(p.x0 + x, p.y0 + y, a, 0);
        s.label_mask(x, y, a, 0) = e.mask(p.x0 + x, p.y0 + y, a, 0);
      }

  s.input = Tensor({cfg_.patch_width, cfg_.patch_height, A_in, 1});
  s.input_mask = Tensor(s.input.dims());
  for (int x = 0; x < cfg_.patch_width; ++x)
    for (int y = 0; y < cfg_.patch_height; ++y)
      for (int a = 0; a < A_in; ++a) {
        s.input(x, y, a, 0) = s.label(x, y, a * cfg_.alpha, 0);
        s.input_mask(x, y, a, 0) = s.label_mask(x, y, a * cfg_.alpha, 0);
      }
  return s;
}

bool Dataset::is_validation(long long index) const {
  return hash_combine(cfg_.seed, static_cast<uint64_t>(index)) % 100 < 5;
}

std::vector<long long> Dataset::train_indices() const {
  std::vector<long long> out;
  for (long long i = 0; i < size(); ++i)
    if (!is_validation(i)) out.push_back(i);
  return out;
}

std::vector<long long> Dataset::val_indices() const {
  std::vector<long long> out;
  for (long long i = 0; i < size(); ++i)
    if (is_validation(i)) out.push_back(i);
  return out;
}

Dataset build_dataset(const std::vector<std::string>& lf_dirs, const TrainConfig& cfg) {
  std::vector<LightField4D> sources;
  sources.reserve(lf_dirs.size());
  for (const std::string& dir : lf_dirs) sources.push_back(to_luminance(load_lightfield(dir)));
  return Dataset(sources, cfg);
}

}  // namespace geoni
