// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace mucrasp {

enum class Precision { f32, f64 };

std::string precision_name(Precision p);
Precision precision_from_name(const std::string& name);

// Architecture description. The scalar fields describe the dense (unpruned)
// shape; layer_kv_groups / layer_d_mlp carry the current per-layer widths,
// which differ from the dense shape after structural pruning. head_dim and
// the query-heads-per-group ratio never change.
struct ModelConfig {
  int n_layers = 4;
  int d_model = 64;
  int n_q_heads = 4;
  int n_kv_groups = 2;
  int head_dim = 16;
  int d_mlp = 128;
  int vocab_size = 259;
  int max_seq = 256;
  int n_vision_tokens = 8;
  Precision precision = Precision::f64;

  std::vector<int> layer_kv_groups;
  std::vector<int> layer_d_mlp;

  int q_per_group() const { return n_q_heads / n_kv_groups; }
  int kv_groups(int layer) const { return layer_kv_groups[layer]; }
  int mlp_width(int layer) const { return layer_d_mlp[layer]; }
  int q_heads(int layer) const { return layer_kv_groups[layer] * q_per_group(); }
  int attn_dim(int layer) const { return q_heads(layer) * head_dim; }
  int kv_dim(int layer) const { return layer_kv_groups[layer] * head_dim; }

  bool is_uniform() const;

  // Fills the per-layer width lists from the dense scalars.
  void fill_uniform();

  // Throws MucraspError on any violated structural invariant.
  void validate() const;

  static ModelConfig toy_default();

  bool operator==(const ModelConfig&) const = default;
};

std::string config_to_json(const ModelConfig&);
ModelConfig config_from_json(const std::string& json_text);

}  // namespace mucrasp
