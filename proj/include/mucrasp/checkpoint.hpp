// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>

#include "mucrasp/model.hpp"

namespace mucrasp {

// On-disk layout: 8-byte magic "MCRASP01", a little-endian uint64 header
// length, a UTF-8 JSON header {config, manifest:[{name,dtype,shape}]}, then
// raw little-endian tensor payloads in manifest order. The payload dtype
// follows cfg.precision; f32 rounds on write and widens on read.
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ModelWeights& w);

std::pair<ModelConfig, ModelWeights> load_checkpoint(const std::string& path);

}  // namespace mucrasp
