// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "geoni/dataset.hpp"
#include "geoni/network.hpp"
#include "geoni/pipeline.hpp"

namespace geoni {

// Two-term objective over a built slice graph: L1 of the d = 0 hypothesis
// against the label on label-valid pixels, plus L1 of the blended output on
// the conjunction of label validity and every hypothesis round-trip mask.
// An empty conjunction drops the second term (with a stderr warning).
struct LossNodes {
  ad::Node* total;
  ad::Node* zero_hypothesis_term;
  ad::Node* blend_term;  // null when the conjunction mask is empty
};
LossNodes training_loss(ad::Tape& tape, const detail::SliceGraph& graph, const Tensor& label,
                        const Tensor& label_mask);

// Adam over the flattened (NI, DIBR) parameter list with global-norm clipping.
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1, double beta2, double eps);

  // pairs of (parameter tensor to update, gradient of same shape)
  void step(const std::vector<std::pair<Tensor*, const Tensor*>>& params_and_grads,
            double clip_norm);
  long long steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainResult {
  long long steps = 0;
  double final_loss = 0.0;
  double best_val_psnr = 0.0;
  std::string metrics_path;
  std::string last_checkpoint_ni;
  std::string last_checkpoint_dibr;
};

// Joint optimization of both networks. Writes JSONL metrics and periodic /
// best / final checkpoints under out_dir. Non-finite loss raises
// DivergenceError carrying the last good checkpoint path.
TrainResult train(const TrainConfig& cfg, const Dataset& dataset, NiNetwork& ni,
                  DibrNetwork& dibr, const std::string& out_dir);

}  // namespace geoni
