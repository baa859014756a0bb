// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "geoni/network.hpp"

namespace geoni {

// Checkpoint file: magic, little-endian uint64 manifest length, JSON manifest
// (network kind, spec, tensor table, shuffle convention version), then raw
// float64 tensor data in manifest order.

void save_ni_checkpoint(const std::string& path, const NiNetwork& net);
void save_dibr_checkpoint(const std::string& path, const DibrNetwork& net);

NiNetwork load_ni_checkpoint(const std::string& path);
DibrNetwork load_dibr_checkpoint(const std::string& path);

}  // namespace geoni
