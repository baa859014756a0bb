// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "geoni/tensor.hpp"

namespace geoni::ad {

// One value in the computation graph. Gradients are allocated lazily during
// the backward sweep; nodes nobody pulls on never materialize a grad.
struct Node {
  Tensor value;
  Tensor grad;
  bool needs_grad = false;
  std::function<void()> backward;

  Tensor& ensure_grad() {
    if (grad.empty()) grad = Tensor(value.dims());
    return grad;
  }
};

// Dynamic tape. Ops append nodes; backward() walks them in reverse creation
// order. Feature tensors are (B, X, Y, A, C) with C contiguous; scalars are
// rank-1 {1}. Ops only record a closure when some input needs a gradient,
// so inference graphs carry no backward state.
class Tape {
 public:
  Node* leaf(Tensor value, bool needs_grad = false);

  // elementwise / structural
  Node* add(Node* a, Node* b);
  Node* leaky_relu(Node* x, double slope);
  Node* concat0(const std::vector<Node*>& xs);
  Node* narrow0(Node* x, int start, int len);
  Node* pad_width_edge(Node* x, int left, int right);
  Node* crop_width(Node* x, int left, int right);

  // pixel shuffling along the first spatial axis; channel order is
  // c_out = c_in * fold + (x mod fold)
  Node* space_to_channel(Node* x, int fold);
  Node* channel_to_space(Node* x, int fold);

  // convolutions; w dims (KX, KH, KA, CI, CO), bias (CO), same padding
  Node* conv3d(Node* x, Node* w, Node* b);
  // transposed conv along the angular axis, stride alpha, kernel
  // (KX, 2*alpha+1, CI, CO), width same-padded, output cropped by alpha per
  // side so input views land on output indices 0, alpha, 2*alpha, ...
  Node* deconv_angular(Node* x, Node* w, Node* b, int alpha);

  // light-field geometry on (B, X, Y, A, C)
  Node* shear(Node* x, double amount, double center);
  Node* upsample_angular_linear(Node* x, int alpha);

  // softmin blending over hypotheses: slices and costs are parallel arrays,
  // one node per hypothesis, each (B, X, Y, A, 1); masks qualify costs
  // (invalid entries act as cost +1e4; all-invalid positions blend uniformly)
  Node* blend_softmin(const std::vector<Node*>& slices, const std::vector<Node*>& costs,
                      const std::vector<Tensor>& masks);

  // mean |x - target| over valid samples; scalar output
  Node* l1_masked_mean(Node* x, const Tensor& target, const ValidityMask& mask);

  // sum of weights[i] * x[i]; scalar output
  Node* weighted_sum(Node* x, const Tensor& weights);

  void backward(Node* root);

  size_t node_count() const { return nodes_.size(); }

 private:
  Node* make(Tensor value, bool needs_grad);
  std::deque<std::unique_ptr<Node>> nodes_;
};

// Softmin weights shared by blending and depth rendering: for each sample,
// w_d = softmax_d(-cost_d) with invalid entries clamped to cost +1e4.
// costs/masks: one tensor per hypothesis, identical shapes.
std::vector<Tensor> softmin_weights(const std::vector<Tensor>& costs,
                                    const std::vector<Tensor>& masks);

constexpr double kInvalidCost = 1e4;

}  // namespace geoni::ad
