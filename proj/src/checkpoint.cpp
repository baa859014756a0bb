// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#include "geoni/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

namespace geoni {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "GEONI1\n";
constexpr int kShuffleConvention = 1;  // phase-innermost channel interleave

void save_checkpoint(const std::string& path, const std::string& kind, const json& spec,
                     const ParamSet& params) {
  json manifest;
  manifest["kind"] = kind;
  manifest["shuffle_convention"] = kShuffleConvention;
  manifest["spec"] = spec;
  json tensors = json::array();
  for (const auto& [name, t] : params.items) tensors.push_back({{"name", name}, {"dims", t.dims()}});
  manifest["tensors"] = tensors;

  std::ofstream out(path, std::ios::binary);
  GEONI_REQUIRE(out.good(), "cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic) - 1);
  std::string m = manifest.dump();
  uint64_t len = m.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(m.data(), static_cast<std::streamsize>(m.size()));
  for (const auto& [name, t] : params.items)
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  GEONI_REQUIRE(out.good(), "write failed for " + path);
}

std::pair<json, ParamSet> load_checkpoint(const std::string& path, const std::string& kind) {
  std::ifstream in(path, std::ios::binary);
  GEONI_REQUIRE(in.good(), "cannot open checkpoint " + path);
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  GEONI_REQUIRE(in.good() && std::memcmp(magic, kMagic, sizeof(magic)) == 0,
                "not a checkpoint file: " + path);
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  GEONI_REQUIRE(in.good() && len < (1u << 20), "corrupt checkpoint manifest in " + path);
  std::string m(len, '\0');
  in.read(m.data(), static_cast<std::streamsize>(len));
  json manifest;
  try {
    manifest = json::parse(m);
  } catch (const json::exception& e) {
    throw Error("corrupt checkpoint manifest in " + path + ": " + e.what());
  }
  GEONI_REQUIRE(manifest.value("kind", "") == kind,
                "checkpoint " + path + " holds a '" + manifest.value("kind", "?") +
                    "' network, expected '" + kind + "'");
  GEONI_REQUIRE(manifest.value("shuffle_convention", -1) == kShuffleConvention,
                "checkpoint " + path + " uses an unknown shuffle convention");

  ParamSet params;
  for (const auto& entry : manifest.at("tensors")) {
    Tensor& t =
        params.add(entry.at("name").get<std::string>(), entry.at("dims").get<std::vector<int>>());
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  GEONI_REQUIRE(in.good(), "truncated checkpoint data in " + path);
  return {manifest, std::move(params)};
}

}  // namespace

void save_ni_checkpoint(const std::string& path, const NiNetwork& net) {
  save_checkpoint(path, "ni",
                  {{"alpha", net.spec.alpha}, {"base_channels", net.spec.base_channels}},
                  net.params);
}

void save_dibr_checkpoint(const std::string& path, const DibrNetwork& net) {
  save_checkpoint(path, "dibr", {{"base_channels", net.spec.base_channels}}, net.params);
}

NiNetwork load_ni_checkpoint(const std::string& path) {
  auto [manifest, params] = load_checkpoint(path, "ni");
  NiNetwork net;
  net.spec.alpha = manifest.at("spec").at("alpha").get<int>();
  net.spec.base_channels = manifest.at("spec").at("base_channels").get<int>();
  net.params = std::move(params);
  return net;
}

DibrNetwork load_dibr_checkpoint(const std::string& path) {
  auto [manifest, params] = load_checkpoint(path, "dibr");
  DibrNetwork net;
  net.spec.base_channels = manifest.at("spec").at("base_channels").get<int>();
  net.params = std::move(params);
  return net;
}

}  // namespace geoni
