// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geoni/light_field.hpp"

namespace geoni {

struct TrainConfig {
  int alpha = 4;
  ShearHypothesisSet hypotheses{{-8.0, -4.0, 0.0, 4.0, 8.0}};
  int input_views = 5;

  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;
  int epochs = 200;
  long long max_steps = 0;  // 0 = run the full epoch budget

  int patch_width = 128;
  int patch_height = 18;
  int patch_stride = 40;
  std::vector<double> augment_shears{-2.0, 2.0};

  uint64_t seed = 0;
  int checkpoint_every = 25;    // epochs
  int pretrain_ni_epochs = 0;   // optional NI-only warmup before joint training
  double grad_clip_norm = 10.0;

  int label_views() const { return alpha * (input_views - 1) + 1; }
};

// One training instance: a label patch with full angular resolution and the
// stride-alpha input derived from it. Masks track augmentation blanks.
struct TrainSample {
  Tensor input;       // (X, Y, A_in, 1)
  Tensor input_mask;  // (X, Y, A_in, 1)
  Tensor label;       // (X, Y, A_out, 1)
  Tensor label_mask;  // (X, Y, A_out, 1)
};

// Patch corpus over a set of luminance light fields. Slices along both
// angular axes are sheared by the augmentation amounts, tiled into patches,
// and split 95/5 into train/validation by seeded hash.
class Dataset {
 public:
  Dataset(const std::vector<LightField4D>& sources, const TrainConfig& cfg);

  long long size() const { return static_cast<long long>(patches_.size()); }
  TrainSample sample(long long index) const;
  bool is_validation(long long index) const;

  std::vector<long long> train_indices() const;
  std::vector<long long> val_indices() const;

 private:
  struct SliceEntry {
    Tensor data;  // (X, Y, A_out, 1)
    Tensor mask;
  };
  struct PatchRef {
    int slice;
    int x0;
    int y0;
  };

  TrainConfig cfg_;
  std::vector<SliceEntry> slices_;
  std::vector<PatchRef> patches_;
};

// Loads each directory as a light field, converts to luminance, and builds
// the patch corpus.
Dataset build_dataset(const std::vector<std::string>& lf_dirs, const TrainConfig& cfg);

}  // namespace geoni
