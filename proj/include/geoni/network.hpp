// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "geoni/autodiff.hpp"
#include "geoni/tensor.hpp"

namespace geoni {

// Ordered parameter container; order is the checkpoint serialization order
// and the optimizer state order.
struct ParamSet {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor& add(const std::string& name, std::vector<int> dims);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
  long long total_size() const;
};

// Both networks share the encoder/bottleneck/decoder layout:
//   Conv1 k[3,3,3] -> 2 packing blocks (fold 2) -> K bottleneck residual
//   modules k[3,1,3] -> (NI only: angular deconv k[5,1,2a+1]) ->
//   2 unpacking blocks -> Conv5 k[3,3,3] to 1 channel.
// Channel ladder: 1 -> F -> 2F -> 4F -> ... -> F -> 1 with F = base_channels.

struct NiNetworkSpec {
  int alpha = 4;
  int base_channels = 16;
  static constexpr int pack_count = 2;
  static constexpr int bottleneck_blocks = 1;

  int output_angular(int input_angular) const { return alpha * (input_angular - 1) + 1; }
};

struct DibrNetworkSpec {
  int base_channels = 16;
  static constexpr int pack_count = 2;
  static constexpr int bottleneck_blocks = 2;
};

constexpr double kLeakySlope = 0.2;
constexpr int kWidthFold = 4;  // two packing folds of 2

// Weights ~ N(0, 1e-2), biases 0, in a fixed layer order.
ParamSet build_ni_network(const NiNetworkSpec& spec, uint64_t seed);
ParamSet build_dibr_network(const DibrNetworkSpec& spec, uint64_t seed);

struct NiNetwork {
  NiNetworkSpec spec;
  ParamSet params;
};

struct DibrNetwork {
  DibrNetworkSpec spec;
  ParamSet params;
};

inline NiNetwork make_ni_network(const NiNetworkSpec& spec, uint64_t seed) {
  return {spec, build_ni_network(spec, seed)};
}
inline DibrNetwork make_dibr_network(const DibrNetworkSpec& spec, uint64_t seed) {
  return {spec, build_dibr_network(spec, seed)};
}

// Parameter leaves registered on a tape, addressable by layer name.
struct BoundParams {
  std::unordered_map<std::string, ad::Node*> nodes;

  ad::Node* at(const std::string& name) const;
};
BoundParams bind_params(ad::Tape& tape, const ParamSet& params, bool trainable);

// Forward passes. Input (B, X, Y, A, 1) with X divisible by 4 (callers pad).
// NI output (B, X, Y, alpha*(A-1)+1, 1); DIBR preserves the shape.
ad::Node* ni_forward(ad::Tape& tape, const BoundParams& p, const NiNetworkSpec& spec, ad::Node* x);
ad::Node* dibr_forward(ad::Tape& tape, const BoundParams& p, const DibrNetworkSpec& spec,
                       ad::Node* x);

// One residual block as used by both networks: x + conv2(lrelu(conv1(x))).
// Expects params "<prefix>.conv1.{w,b}" and "<prefix>.conv2.{w,b}".
ad::Node* residual_module(ad::Tape& tape, const BoundParams& p, const std::string& prefix,
                          ad::Node* x);

}  // namespace geoni
