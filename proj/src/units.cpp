// SPDX-License-Identifier: Apache-2.0
#include "mucrasp/units.hpp"

#include "mucrasp/common.hpp"

namespace mucrasp {

std::string unit_kind_name(UnitKind k) {
  return k == UnitKind::MlpNeuron ? "mlp_neuron" : "gqa_group";
}

UnitKind unit_kind_from_name(const std::string& name) {
  if (name == "mlp_neuron") return UnitKind::MlpNeuron;
  if (name == "gqa_group") return UnitKind::GqaGroup;
  throw MucraspError("unknown unit kind '" + name + "'");
}

long long mlp_neuron_cost(const ModelConfig& cfg) {
  return 3LL * cfg.d_model;  // gate row + up row + down column
}

long long gqa_group_cost(const ModelConfig& cfg) {
  // K row block + V row block, plus Q rows and O columns of the group's
  // query heads.
  return 2LL * cfg.head_dim * cfg.d_model +
         2LL * cfg.q_per_group() * cfg.head_dim * cfg.d_model;
}

std::vector<StructuralUnit> enumerate_units(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<StructuralUnit> units;
  const long long mlp_cost = mlp_neuron_cost(cfg);
  const long long gqa_cost = gqa_group_cost(cfg);
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (int j = 0; j < cfg.mlp_width(l); ++j)
      units.push_back({UnitKind::MlpNeuron, l, j, mlp_cost});
    for (int g = 0; g < cfg.kv_groups(l); ++g)
      units.push_back({UnitKind::GqaGroup, l, g, gqa_cost});
  }
  return units;
}

long long prunable_params(const ModelConfig& cfg) {
  long long n = 0;
  for (int l = 0; l < cfg.n_layers; ++l) {
    n += mlp_neuron_cost(cfg) * cfg.mlp_width(l);
    n += gqa_group_cost(cfg) * cfg.kv_groups(l);
  }
  return n;
}

KeepSet keep_set_from_units(const ModelConfig& cfg,
                            const std::vector<StructuralUnit>& units,
                            const std::vector<uint8_t>& kept) {
  if (units.size() != kept.size())
    throw MucraspError("keep_set_from_units: units/kept size mismatch");
  KeepSet ks;
  ks.mlp.resize(cfg.n_layers);
  ks.groups.resize(cfg.n_layers);
  for (int l = 0; l < cfg.n_layers; ++l) {
    ks.mlp[l].assign(cfg.mlp_width(l), 0);
    ks.groups[l].assign(cfg.kv_groups(l), 0);
  }
  for (size_t i = 0; i < units.size(); ++i) {
    if (!kept[i]) continue;
    const StructuralUnit& u = units[i];
    if (u.layer < 0 || u.layer >= cfg.n_layers)
      throw MucraspError("keep_set_from_units: unit layer out of range");
    auto& mask = u.kind == UnitKind::MlpNeuron ? ks.mlp[u.layer] : ks.groups[u.layer];
    if (u.index < 0 || u.index >= static_cast<int>(mask.size()))
      throw MucraspError("keep_set_from_units: unit index out of range");
    mask[u.index] = 1;
  }
  return ks;
}

namespace {

std::vector<int> kept_indices(const std::vector<uint8_t>& mask) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(mask.size()); ++i)
    if (mask[i]) idx.push_back(i);
  return idx;
}

Matrix take_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<int>(rows.size()), m.cols);
  for (int r = 0; r < out.rows; ++r) {
    const double* src = m.row(rows[r]);
    double* dst = out.row(r);
    for (int c = 0; c < m.cols; ++c) dst[c] = src[c];
  }
  return out;
}

Matrix take_cols(const Matrix& m, const std::vector<int>& cols) {
  Matrix out(m.rows, static_cast<int>(cols.size()));
  for (int r = 0; r < m.rows; ++r) {
    const double* src = m.row(r);
    double* dst = out.row(r);
    for (int c = 0; c < out.cols; ++c) dst[c] = src[cols[c]];
  }
  return out;
}

// Row/column indices spanned by the query heads of the kept groups.
std::vector<int> head_span_indices(const std::vector<int>& groups, int qpg, int hd) {
  std::vector<int> idx;
  idx.reserve(groups.size() * qpg * hd);
  for (int g : groups)
    for (int i = g * qpg * hd; i < (g + 1) * qpg * hd; ++i) idx.push_back(i);
  return idx;
}

std::vector<int> group_span_indices(const std::vector<int>& groups, int hd) {
  std::vector<int> idx;
  idx.reserve(groups.size() * hd);
  for (int g : groups)
    for (int i = g * hd; i < (g + 1) * hd; ++i) idx.push_back(i);
  return idx;
}

}  // namespace

std::pair<ModelConfig, ModelWeights> apply_prune(const ModelConfig& cfg,
                                                 const ModelWeights& w,
                                                 const KeepSet& keep) {
  cfg.validate();
  if (keep.mlp.size() != static_cast<size_t>(cfg.n_layers) ||
      keep.groups.size() != static_cast<size_t>(cfg.n_layers))
    throw MucraspError("apply_prune: keep set layer count mismatch");

  ModelConfig out_cfg = cfg;
  ModelWeights out = w;  // embeddings, norms, head carried over unchanged

  for (int l = 0; l < cfg.n_layers; ++l) {
    if (static_cast<int>(keep.mlp[l].size()) != cfg.mlp_width(l) ||
        static_cast<int>(keep.groups[l].size()) != cfg.kv_groups(l))
      throw MucraspError("apply_prune: keep mask width mismatch at layer " +
                         std::to_string(l));
    const std::vector<int> neurons = kept_indices(keep.mlp[l]);
    const std::vector<int> groups = kept_indices(keep.groups[l]);
    if (neurons.empty())
      throw MucraspError("apply_prune: layer " + std::to_string(l) +
                         " would keep no MLP neurons");
    if (groups.empty())
      throw MucraspError("apply_prune: layer " + std::to_string(l) +
                         " would keep no GQA groups");

    const LayerWeights& lw = w.layers[l];
    LayerWeights& ow = out.layers[l];
    const int hd = cfg.head_dim;
    const int qpg = cfg.q_per_group();

    const std::vector<int> kv_rows = group_span_indices(groups, hd);
    const std::vector<int> head_rows = head_span_indices(groups, qpg, hd);

    ow.w_k = take_rows(lw.w_k, kv_rows);
    ow.w_v = take_rows(lw.w_v, kv_rows);
    ow.w_q = take_rows(lw.w_q, head_rows);
    ow.w_o = take_cols(lw.w_o, head_rows);
    ow.w_gate = take_rows(lw.w_gate, neurons);
    ow.w_up = take_rows(lw.w_up, neurons);
    ow.w_down = take_cols(lw.w_down, neurons);

    out_cfg.layer_kv_groups[l] = static_cast<int>(groups.size());
    out_cfg.layer_d_mlp[l] = static_cast<int>(neurons.size());
  }

  out_cfg.validate();
  return {std::move(out_cfg), std::move(out)};
}

}  // namespace mucrasp
