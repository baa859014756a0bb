// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "geoni/light_field.hpp"
#include "geoni/network.hpp"

namespace geoni {

// Per-hypothesis inverse-sheared reconstructions and their validity.
struct ShearStack {
  ShearHypothesisSet hypotheses;
  Tensor slices;  // (D, X, Y, A2, 1)
  Tensor masks;   // (D, X, Y, A2, 1)
};

struct ReconstructionCostVolume {
  Tensor costs;  // (D, X, Y, A2, 1)
};

// Disparity in pixels per input-rate view step.
struct DepthVolume {
  Tensor values;  // (X, Y, A2)
};

enum class NiMode { Learned, Bilinear };

// Test hook replacing dibr_forward: maps the hypothesis set plus the
// per-hypothesis reconstructions and masks (each (B, X, Y, A2, 1)) to
// per-hypothesis costs of the same shape.
using CostOverride = std::function<std::vector<Tensor>(
    const ShearHypothesisSet& D, const std::vector<Tensor>& recons,
    const std::vector<Tensor>& masks)>;

struct PipelineConfig {
  int alpha = 4;
  NiMode ni_mode = NiMode::Learned;
  CostOverride cost_override;  // empty: use the DIBR network (or zero costs if absent)
  bool t_then_s = false;       // 4D stage order ablation flag
};

struct ReconstructResult {
  LightFieldSlice slice;  // blended output; mask = any hypothesis valid
  ReconstructionCostVolume costs;
  ShearStack stack;
};

// Full reconstruction of one slice: shear by every d in D, reconstruct the
// angular axis (NI network or bilinear), undo each shear, score each
// hypothesis with the DIBR network, softmin-blend. Networks see one D-fold
// batch per forward. `ni` may be null only in Bilinear mode; `dibr` may be
// null (zero costs) or be replaced via cfg.cost_override.
ReconstructResult reconstruct_slice(const LightFieldSlice& input, const ShearHypothesisSet& D,
                                    const NiNetwork* ni, const DibrNetwork* dibr,
                                    const PipelineConfig& cfg);

// L-hat = sum_d L~_d * softmax_d(-C_d); invalid entries cost +1e4, uniform
// fallback where nothing is valid.
LightFieldSlice blend(const ShearStack& stack, const ReconstructionCostVolume& costs);

// Soft-argmin depth D = sum_d d * softmax_d(-C_d). Positive and negative
// hypotheses accumulate separately (mirrored visit order), so symmetric
// weights give exactly 0. Masks optional.
DepthVolume render_depth(const ReconstructionCostVolume& costs, const ShearHypothesisSet& D);
DepthVolume render_depth(const ReconstructionCostVolume& costs, const ShearHypothesisSet& D,
                         const Tensor& masks);

// Edge-aware cost smoothing (guided filter, per view, per hypothesis) guided
// by the blended slice; used for depth visualization only.
ReconstructionCostVolume filter_cost_volume(const ReconstructionCostVolume& costs,
                                            const LightFieldSlice& guide, int radius = 8,
                                            double eps = 1e-3);

// Repeated reconstruction; stage k uses stage_sets[k] if provided, else the
// stage-1 set scaled by 1/alpha per stage. A_k = alpha*(A_{k-1}-1)+1.
LightFieldSlice cascade_reconstruct(const LightFieldSlice& input, int stages,
                                    const std::vector<ShearHypothesisSet>& stage_sets,
                                    const NiNetwork* ni, const DibrNetwork* dibr,
                                    const PipelineConfig& cfg);

// Hierarchical 4D reconstruction: all s-axis slices first, then all t-axis
// slices of the intermediate result (cfg.t_then_s swaps the order). Expects
// luminance; skips an axis whose angular count is 1.
LightField4D reconstruct_4d(const LightField4D& lf, const ShearHypothesisSet& D,
                            const NiNetwork* ni, const DibrNetwork* dibr,
                            const PipelineConfig& cfg);

// Full color export path: Y through the learned pipeline, Cb/Cr through the
// shear-sweep bilinear path blended with the Y-derived weights.
LightField4D reconstruct_4d_rgb(const LightField4D& rgb, const ShearHypothesisSet& D,
                                const NiNetwork* ni, const DibrNetwork* dibr,
                                const PipelineConfig& cfg);

// One chroma plane upsampled with the luma cost volume's weights.
LightFieldSlice upsample_chroma(const LightFieldSlice& chroma, const ShearHypothesisSet& D,
                                const ReconstructionCostVolume& y_costs,
                                const ShearStack& y_stack, int alpha);

// Ablations: plain NI (D = {0}, no DIBR) and the full sweep with bilinear
// interpolation in place of the NI network.
LightFieldSlice ni_only(const LightFieldSlice& input, const NiNetwork& ni,
                        const PipelineConfig& cfg);
ReconstructResult bilinear_geo_ni(const LightFieldSlice& input, const ShearHypothesisSet& D,
                                  const DibrNetwork* dibr, const PipelineConfig& cfg);

// Raw cost-volume dump: little-endian float32 data plus a JSON shape header.
void save_cost_volume(const std::string& path_prefix, const ReconstructionCostVolume& costs);

// Depth export: one 16-bit PNG per view plus {"d_min","d_max"} scale record.
void save_depth_volume(const std::string& dir, const DepthVolume& depth, int view_t_index = 0);

namespace detail {

// Shared graph assembly for inference and training. input (B, X, Y, A, 1),
// input_mask same shape (may be empty = all valid).
struct SliceGraph {
  std::vector<ad::Node*> recons;  // per-d (B, X, Y, A2, 1)
  std::vector<ad::Node*> costs;   // per-d (B, X, Y, A2, 1)
  std::vector<Tensor> masks;      // per-d (B, X, Y, A2, 1)
  ad::Node* blended = nullptr;
  int zero_index = 0;
};

SliceGraph build_slice_graph(ad::Tape& tape, ad::Node* input, const Tensor& input_mask,
                             const ShearHypothesisSet& D, const BoundParams* ni_bp,
                             const NiNetworkSpec* ni_spec, const BoundParams* dibr_bp,
                             const DibrNetworkSpec* dibr_spec, const PipelineConfig& cfg);

Tensor mask_shear(const Tensor& mask, double amount, double center);
Tensor mask_upsample_angular(const Tensor& mask, int alpha);

}  // namespace detail

}  // namespace geoni
