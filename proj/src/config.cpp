// SPDX-License-Identifier: Apache-2.0
#include "mucrasp/config.hpp"

#include <algorithm>

#include "mucrasp/common.hpp"

namespace mucrasp {

std::string precision_name(Precision p) {
  return p == Precision::f32 ? "f32" : "f64";
}

Precision precision_from_name(const std::string& name) {
  if (name == "f32") return Precision::f32;
  if (name == "f64") return Precision::f64;
  throw MucraspError("unknown precision '" + name + "' (expected f32 or f64)");
}

bool ModelConfig::is_uniform() const {
  return std::all_of(layer_kv_groups.begin(), layer_kv_groups.end(),
                     [&](int g) { return g == n_kv_groups; }) &&
         std::all_of(layer_d_mlp.begin(), layer_d_mlp.end(),
                     [&](int m) { return m == d_mlp; });
}

void ModelConfig::fill_uniform() {
  layer_kv_groups.assign(n_layers, n_kv_groups);
  layer_d_mlp.assign(n_layers, d_mlp);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw MucraspError("ModelConfig: " + msg); };
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (d_model < 1 || head_dim < 1 || d_mlp < 1) fail("widths must be >= 1");
  if (n_q_heads < 1 || n_kv_groups < 1) fail("head counts must be >= 1");
  if (vocab_size < 1 || max_seq < 1) fail("vocab_size and max_seq must be >= 1");
  if (n_vision_tokens < 0) fail("n_vision_tokens must be >= 0");
  if (n_vision_tokens >= max_seq) fail("n_vision_tokens must leave room for text");
  if (n_q_heads % n_kv_groups != 0) fail("n_q_heads must be divisible by n_kv_groups");
  if (n_q_heads * head_dim != d_model) fail("n_q_heads * head_dim must equal d_model");
  if (layer_kv_groups.size() != static_cast<size_t>(n_layers) ||
      layer_d_mlp.size() != static_cast<size_t>(n_layers)) {
    fail("per-layer width lists must have n_layers entries");
  }
  for (int l = 0; l < n_layers; ++l) {
    if (layer_kv_groups[l] < 1 || layer_kv_groups[l] > n_kv_groups)
      fail("layer_kv_groups out of [1, n_kv_groups]");
    if (layer_d_mlp[l] < 1 || layer_d_mlp[l] > d_mlp)
      fail("layer_d_mlp out of [1, d_mlp]");
  }
}

ModelConfig ModelConfig::toy_default() {
  ModelConfig cfg;  // field initializers carry the toy shape
  cfg.fill_uniform();
  cfg.validate();
  return cfg;
}

}  // namespace mucrasp
