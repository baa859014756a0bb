// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#include <doctest/doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "geoni/checkpoint.hpp"
#include "geoni/error.hpp"

using namespace geoni;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("geoni_ckpt_test_" + name);
  std::error_code ec;
  fs::remove(p, ec);
  return p;
}

}  // namespace

TEST_CASE("NI checkpoint round trip is bit exact") {
  NiNetworkSpec spec;
  spec.alpha = 3;
  spec.base_channels = 2;
  NiNetwork net{spec, build_ni_network(spec, 77)};
  fs::path p = temp_file("ni.ckpt");
  save_ni_checkpoint(p.string(), net);

  NiNetwork back = load_ni_checkpoint(p.string());
  CHECK(back.spec.alpha == spec.alpha);
  CHECK(back.spec.base_channels == spec.base_channels);
  REQUIRE(back.params.items.size() == net.params.items.size());
  for (size_t i = 0; i < net.params.items.size(); ++i) {
    REQUIRE(back.params.items[i].first == net.params.items[i].first);
    const Tensor& a = net.params.items[i].second;
    const Tensor& b = back.params.items[i].second;
    REQUIRE(b.same_shape(a));
    for (long long j = 0; j < a.size(); ++j) REQUIRE(a.data()[j] == b.data()[j]);
  }
  fs::remove(p);
}

TEST_CASE("DIBR checkpoint round trip is bit exact") {
  DibrNetworkSpec spec;
  spec.base_channels = 3;
  DibrNetwork net{spec, build_dibr_network(spec, 78)};
  fs::path p = temp_file("dibr.ckpt");
  save_dibr_checkpoint(p.string(), net);

  DibrNetwork back = load_dibr_checkpoint(p.string());
  CHECK(back.spec.base_channels == spec.base_channels);
  REQUIRE(back.params.items.size() == net.params.items.size());
  for (size_t i = 0; i < net.params.items.size(); ++i) {
    const Tensor& a = net.params.items[i].second;
    const Tensor& b = back.params.items[i].second;
    for (long long j = 0; j < a.size(); ++j) REQUIRE(a.data()[j] == b.data()[j]);
  }
  fs::remove(p);
}

TEST_CASE("loading the wrong network kind is rejected") {
  NiNetworkSpec spec;
  spec.base_channels = 2;
  NiNetwork net{spec, build_ni_network(spec, 79)};
  fs::path p = temp_file("kind.ckpt");
  save_ni_checkpoint(p.string(), net);
  CHECK_THROWS_AS(load_dibr_checkpoint(p.string()), Error);
  fs::remove(p);
}

TEST_CASE("truncated checkpoints are rejected") {
  NiNetworkSpec spec;
  spec.base_channels = 2;
  NiNetwork net{spec, build_ni_network(spec, 80)};
  fs::path p = temp_file("trunc.ckpt");
  save_ni_checkpoint(p.string(), net);

  const auto full = fs::file_size(p);
  fs::resize_file(p, full / 2);
  CHECK_THROWS_AS(load_ni_checkpoint(p.string()), Error);
  fs::remove(p);
}

TEST_CASE("missing checkpoint file is rejected") {
  CHECK_THROWS_AS(load_ni_checkpoint("/nonexistent/path/net.ckpt"), Error);
}

TEST_CASE("garbage magic is rejected") {
  fs::path p = temp_file("magic.ckpt");
  std::ofstream(p) << "not a checkpoint at all, just text";
  CHECK_THROWS_AS(load_ni_checkpoint(p.string()), Error);
  fs::remove(p);
}
