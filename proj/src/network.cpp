// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#include "geoni/network.hpp"

#include "geoni/rng.hpp"

namespace geoni {

Tensor& ParamSet::add(const std::string& name, std::vector<int> dims) {
  GEONI_REQUIRE(!has(name), "duplicate parameter " + name);
  items.emplace_back(name, Tensor(std::move(dims)));
  return items.back().second;
}

Tensor& ParamSet::get(const std::string& name) {
  for (auto& [n, t] : items)
    if (n == name) return t;
  throw Error("unknown parameter " + name);
}

const Tensor& ParamSet::get(const std::string& name) const {
  for (const auto& [n, t] : items)
    if (n == name) return t;
  throw Error("unknown parameter " + name);
}

bool ParamSet::has(const std::string& name) const {
  for (const auto& [n, t] : items)
    if (n == name) return true;
  return false;
}

long long ParamSet::total_size() const {
  long long n = 0;
  for (const auto& [name, t] : items) n += t.size();
  return n;
}

namespace {

void add_conv(ParamSet& p, const std::string& prefix, int kx, int kh, int ka, int ci, int co) {
  p.add(prefix + ".w", {kx, kh, ka, ci, co});
  p.add(prefix + ".b", {co});
}

void add_residual_module(ParamSet& p, const std::string& prefix, int kx, int kh, int ka, int c) {
  add_conv(p, prefix + ".conv1", kx, kh, ka, c, c);
  add_conv(p, prefix + ".conv2", kx, kh, ka, c, c);
}

// Shared skeleton; the deconv stage is NI-only.
ParamSet build_network(int base, int bottleneck_blocks, int alpha_or_zero) {
  ParamSet p;
  const int F = base;
  add_conv(p, "conv1", 3, 3, 3, 1, F);
  add_residual_module(p, "pack1", 3, 3, 3, 2 * F);
  add_residual_module(p, "pack2", 3, 3, 3, 4 * F);
  for (int k = 1; k <= bottleneck_blocks; ++k)
    add_residual_module(p, "bott" + std::to_string(k), 3, 1, 3, 4 * F);
  if (alpha_or_zero > 0) {
    p.add("deconv.w", {5, 2 * alpha_or_zero + 1, 4 * F, 4 * F});
    p.add("deconv.b", {4 * F});
  }
  add_residual_module(p, "unpack1", 3, 3, 3, 2 * F);
  add_residual_module(p, "unpack2", 3, 3, 3, F);
  add_conv(p, "conv5", 3, 3, 3, F, 1);
  return p;
}

void init_params(ParamSet& p, uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, t] : p.items) {
    if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0) continue;  // biases stay 0
    for (long long i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0, 1e-2);
  }
}

}  // namespace

ParamSet build_ni_network(const NiNetworkSpec& spec, uint64_t seed) {
  GEONI_REQUIRE(spec.alpha >= 2, "ni network: alpha must be >= 2");
  GEONI_REQUIRE(spec.base_channels >= 1, "ni network: base_channels must be positive");
  ParamSet p = build_network(spec.base_channels, NiNetworkSpec::bottleneck_blocks, spec.alpha);
  init_params(p, seed);
  return p;
}

ParamSet build_dibr_network(const DibrNetworkSpec& spec, uint64_t seed) {
  GEONI_REQUIRE(spec.base_channels >= 1, "dibr network: base_channels must be positive");
  ParamSet p = build_network(spec.base_channels, DibrNetworkSpec::bottleneck_blocks, 0);
  init_params(p, seed);
  return p;
}

ad::Node* BoundParams::at(const std::string& name) const {
  auto it = nodes.find(name);
  GEONI_REQUIRE(it != nodes.end(), "unbound parameter " + name);
  return it->second;
}

BoundParams bind_params(ad::Tape& tape, const ParamSet& params, bool trainable) {
  BoundParams bp;
  for (const auto& [name, t] : params.items) bp.nodes[name] = tape.leaf(t, trainable);
  return bp;
}

namespace {

ad::Node* conv(ad::Tape& t, const BoundParams& p, const std::string& prefix, ad::Node* x) {
  return t.conv3d(x, p.at(prefix + ".w"), p.at(prefix + ".b"));
}

}  // namespace

ad::Node* residual_module(ad::Tape& t, const BoundParams& p, const std::string& prefix,
                          ad::Node* x) {
  ad::Node* h = t.leaky_relu(conv(t, p, prefix + ".conv1", x), kLeakySlope);
  return t.add(x, conv(t, p, prefix + ".conv2", h));
}

namespace {

ad::Node* forward_common(ad::Tape& t, const BoundParams& p, int bottleneck_blocks, int alpha,
                         ad::Node* x) {
  GEONI_REQUIRE(x->value.ndim() == 5 && x->value.dim(4) == 1, "forward expects (B,X,Y,A,1)");
  GEONI_REQUIRE(x->value.dim(1) % kWidthFold == 0, "forward: width must be a multiple of 4");
  ad::Node* h = conv(t, p, "conv1", x);
  h = residual_module(t, p, "pack1", t.space_to_channel(h, 2));
  h = residual_module(t, p, "pack2", t.space_to_channel(h, 2));
  for (int k = 1; k <= bottleneck_blocks; ++k)
    h = residual_module(t, p, "bott" + std::to_string(k), h);
  if (alpha > 0) h = t.deconv_angular(h, p.at("deconv.w"), p.at("deconv.b"), alpha);
  h = residual_module(t, p, "unpack1", t.channel_to_space(h, 2));
  h = residual_module(t, p, "unpack2", t.channel_to_space(h, 2));
  return conv(t, p, "conv5", h);
}

}  // namespace

ad::Node* ni_forward(ad::Tape& tape, const BoundParams& p, const NiNetworkSpec& spec,
                     ad::Node* x) {
  return forward_common(tape, p, NiNetworkSpec::bottleneck_blocks, spec.alpha, x);
}

ad::Node* dibr_forward(ad::Tape& tape, const BoundParams& p, const DibrNetworkSpec& spec,
                       ad::Node* x) {
  (void)spec;
  return forward_common(tape, p, DibrNetworkSpec::bottleneck_blocks, 0, x);
}

}  // namespace geoni
