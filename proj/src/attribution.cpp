// SPDX-License-Identifier: Apache-2.0
#include "mucrasp/attribution.hpp"

#include <cmath>
#include <cstdlib>
#include <utility>

#include <nlohmann/json.hpp>

#include "mucrasp/common.hpp"
#include "mucrasp/model.hpp"
#include "mucrasp/serialize.hpp"

namespace mucrasp {

namespace {

// Sum of |w ⊙ g| over a row span; g == nullptr degrades to the plain l1 norm
// of the span (the magnitude baseline reuses the same slice walk).
double rows_abs_sum(const Matrix& w, const Matrix* g, int r0, int r1) {
  double s = 0.0;
  for (int r = r0; r < r1; ++r) {
    const double* wp = w.row(r);
    if (g) {
      const double* gp = g->row(r);
      for (int c = 0; c < w.cols; ++c) s += std::abs(wp[c] * gp[c]);
    } else {
      for (int c = 0; c < w.cols; ++c) s += std::abs(wp[c]);
    }
  }
  return s;
}

double cols_abs_sum(const Matrix& w, const Matrix* g, int c0, int c1) {
  double s = 0.0;
  for (int r = 0; r < w.rows; ++r) {
    const double* wp = w.row(r);
    if (g) {
      const double* gp = g->row(r);
      for (int c = c0; c < c1; ++c) s += std::abs(wp[c] * gp[c]);
    } else {
      for (int c = c0; c < c1; ++c) s += std::abs(wp[c]);
    }
  }
  return s;
}

// Walks exactly the parameter slices that pruning the unit would remove.
// include_kv toggles the K/V rows of a GQA group's importance; cost
// accounting elsewhere always counts them.
double unit_slice_sum(const StructuralUnit& u, const ModelWeights& w,
                      const GradientTable* g, const ModelConfig& cfg,
                      bool include_kv) {
  const LayerWeights& lw = w.layers[u.layer];
  const LayerWeights* lg = g ? &g->layers[u.layer] : nullptr;
  if (u.kind == UnitKind::MlpNeuron) {
    const int j = u.index;
    return rows_abs_sum(lw.w_gate, lg ? &lg->w_gate : nullptr, j, j + 1) +
           rows_abs_sum(lw.w_up, lg ? &lg->w_up : nullptr, j, j + 1) +
           cols_abs_sum(lw.w_down, lg ? &lg->w_down : nullptr, j, j + 1);
  }
  const int hd = cfg.head_dim;
  const int qpg = cfg.q_per_group();
  const int q0 = u.index * qpg * hd;
  const int q1 = q0 + qpg * hd;
  double s = rows_abs_sum(lw.w_q, lg ? &lg->w_q : nullptr, q0, q1) +
             cols_abs_sum(lw.w_o, lg ? &lg->w_o : nullptr, q0, q1);
  if (include_kv) {
    const int k0 = u.index * hd;
    const int k1 = k0 + hd;
    s += rows_abs_sum(lw.w_k, lg ? &lg->w_k : nullptr, k0, k1) +
         rows_abs_sum(lw.w_v, lg ? &lg->w_v : nullptr, k0, k1);
  }
  return s;
}

std::vector<double> per_unit_scores(const std::vector<StructuralUnit>& units,
                                    const ModelWeights& w,
                                    const GradientTable* g,
                                    const ModelConfig& cfg, bool include_kv) {
  std::vector<double> row(units.size());
  for (size_t j = 0; j < units.size(); ++j)
    row[j] = unit_slice_sum(units[j], w, g, cfg, include_kv);
  return row;
}

}  // namespace

std::string table_kind_name(TableKind k) {
  switch (k) {
    case TableKind::global: return "global";
    case TableKind::pivot: return "pivot";
    case TableKind::fused: return "fused";
    case TableKind::magnitude: return "magnitude";
  }
  throw MucraspError("table_kind_name: unknown kind");
}

TableKind table_kind_from_name(const std::string& name) {
  if (name == "global") return TableKind::global;
  if (name == "pivot") return TableKind::pivot;
  if (name == "fused") return TableKind::fused;
  if (name == "magnitude") return TableKind::magnitude;
  throw MucraspError("unknown importance table kind: " + name);
}

ImportanceTable global_attribution(const ModelWeights& w, const ModelConfig& cfg,
                                   const Corpus& corpus,
                                   const AttributionOptions& opts) {
  if (corpus.samples.empty())
    throw MucraspError("global_attribution: corpus is empty");
  ImportanceTable t;
  t.kind = TableKind::global;
  t.units = enumerate_units(cfg);
  t.sample_count = static_cast<int>(corpus.samples.size());
  const int n = t.sample_count;
  const size_t m = t.units.size();

  std::vector<std::vector<double>> slots(static_cast<size_t>(n));
  parallel_for(n, opts.jobs, [&](int i) {
    const CalibrationSample& s = corpus.samples[static_cast<size_t>(i)];
    ForwardTrace tr =
        forward(w, cfg, s.token_ids, s.vision_embeddings, TraceMode::train);
    tr.loss_mask = s.loss_mask;
    GradientTable g = backward(w, cfg, tr, s.full_targets, LossKind::mean);
    slots[static_cast<size_t>(i)] =
        per_unit_scores(t.units, w, &g, cfg, !opts.attn_qo_only);
  });

  t.scores.assign(m, 0.0);
  for (int i = 0; i < n; ++i)
    for (size_t j = 0; j < m; ++j) t.scores[j] += slots[static_cast<size_t>(i)][j];
  for (double& v : t.scores) v /= n;
  return t;
}

ImportanceTable pivot_attribution(const ModelWeights& w, const ModelConfig& cfg,
                                  const Corpus& corpus,
                                  const std::vector<PivotMask>& masks,
                                  const AttributionOptions& opts) {
  if (corpus.samples.empty())
    throw MucraspError("pivot_attribution: corpus is empty");
  if (masks.size() != corpus.samples.size())
    throw MucraspError("pivot_attribution: one mask per sample required");

  ImportanceTable t;
  t.kind = TableKind::pivot;
  t.units = enumerate_units(cfg);
  const int n = static_cast<int>(corpus.samples.size());
  const size_t m = t.units.size();

  std::vector<std::vector<double>> slots(static_cast<size_t>(n));
  parallel_for(n, opts.jobs, [&](int i) {
    const CalibrationSample& s = corpus.samples[static_cast<size_t>(i)];
    const PivotMask& mask = masks[static_cast<size_t>(i)];
    if (mask.window.empty()) return;  // skipped, does not count toward the mean
    if (mask.resp_begin != s.resp_begin || mask.resp_end != s.resp_end)
      throw MucraspError(
          "pivot_attribution: mask coordinates do not match the sample's "
          "response span (absolute sequence positions required)");

    ForwardTrace tr =
        forward(w, cfg, s.token_ids, s.vision_embeddings, TraceMode::train);
    tr.loss_mask.assign(static_cast<size_t>(tr.seq), 0);
    for (int pos : mask.window) {
      if (pos < s.resp_begin || pos >= s.resp_end)
        throw MucraspError("pivot_attribution: window position outside response");
      tr.loss_mask[static_cast<size_t>(pos)] = 1;
    }
    GradientTable g = backward(w, cfg, tr, s.full_targets, LossKind::sum);
    std::vector<double> row =
        per_unit_scores(t.units, w, &g, cfg, !opts.attn_qo_only);
    const double inv = 1.0 / static_cast<double>(mask.pivot_indices.size());
    for (double& v : row) v *= inv;
    slots[static_cast<size_t>(i)] = std::move(row);
  });

  int contributing = 0;
  t.scores.assign(m, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto& row = slots[static_cast<size_t>(i)];
    if (row.empty()) continue;
    ++contributing;
    for (size_t j = 0; j < m; ++j) t.scores[j] += row[j];
  }
  if (contributing == 0)
    throw MucraspError("pivot_attribution: no sample has a non-empty window");
  for (double& v : t.scores) v /= contributing;
  t.sample_count = contributing;
  return t;
}

ImportanceTable magnitude_scores(const ModelWeights& w, const ModelConfig& cfg) {
  ImportanceTable t;
  t.kind = TableKind::magnitude;
  t.units = enumerate_units(cfg);
  t.sample_count = 0;
  t.scores = per_unit_scores(t.units, w, nullptr, cfg, /*include_kv=*/true);
  return t;
}

ImportanceTable normalize_importance(ImportanceTable table) {
  if (table.normalized)
    throw MucraspError("normalize_importance: table is already normalized");
  if (table.units.size() != table.scores.size())
    throw MucraspError("normalize_importance: units/scores size mismatch");
  for (UnitKind kind : {UnitKind::MlpNeuron, UnitKind::GqaGroup}) {
    double sum = 0.0;
    long long count = 0;
    for (size_t j = 0; j < table.units.size(); ++j) {
      if (table.units[j].kind != kind) continue;
      sum += table.scores[j];
      ++count;
    }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    if (mean == 0.0) continue;  // an all-zero kind stays all-zero
    for (size_t j = 0; j < table.units.size(); ++j)
      if (table.units[j].kind == kind) table.scores[j] /= mean;
  }
  table.normalized = true;
  return table;
}

std::string importance_to_json(const ImportanceTable& table) {
  if (table.units.size() != table.scores.size())
    throw MucraspError("importance_to_json: units/scores size mismatch");
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = table_kind_name(table.kind);
  j["sample_count"] = table.sample_count;
  j["normalized"] = table.normalized;
  nlohmann::json scores = nlohmann::json::array();
  for (size_t i = 0; i < table.units.size(); ++i) {
    const StructuralUnit& u = table.units[i];
    scores.push_back({{"kind", unit_kind_name(u.kind)},
                      {"layer", u.layer},
                      {"index", u.index},
                      {"cost", u.cost},
                      {"value", table.scores[i]}});
  }
  j["scores"] = std::move(scores);
  return j.dump(2) + "\n";
}

ImportanceTable importance_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw MucraspError(std::string("importance table: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion)
      throw MucraspError("importance table: unsupported schema version");
    ImportanceTable t;
    t.kind = table_kind_from_name(j.at("kind").get<std::string>());
    t.sample_count = j.at("sample_count").get<int>();
    t.normalized = j.at("normalized").get<bool>();
    for (const auto& row : j.at("scores")) {
      StructuralUnit u;
      u.kind = unit_kind_from_name(row.at("kind").get<std::string>());
      u.layer = row.at("layer").get<int>();
      u.index = row.at("index").get<int>();
      u.cost = row.at("cost").get<long long>();
      t.units.push_back(u);
      t.scores.push_back(row.at("value").get<double>());
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw MucraspError(std::string("importance table: bad field: ") + e.what());
  }
}

std::vector<PivotMask> detect_corpus_pivots(const Corpus& corpus, int half_width,
                                            int min_markers) {
  std::vector<PivotMask> masks;
  masks.reserve(corpus.samples.size());
  for (const CalibrationSample& s : corpus.samples)
    masks.push_back(
        detect_pivots(s.response_text, s.char_to_token, half_width, min_markers));
  return masks;
}

std::vector<PivotMask> random_corpus_pivots(const Corpus& corpus, int half_width,
                                            int min_markers, uint64_t seed) {
  const uint64_t base = sub_seed(seed, "random_pivots");
  std::vector<PivotMask> masks;
  masks.reserve(corpus.samples.size());
  for (size_t i = 0; i < corpus.samples.size(); ++i) {
    const CalibrationSample& s = corpus.samples[i];
    // Position count mirrors what real detection would use so the ablation
    // isolates *where* the windows sit, not how many there are.
    const PivotMask real =
        detect_pivots(s.response_text, s.char_to_token, half_width, min_markers);
    const int count = static_cast<int>(real.pivot_indices.size());
    PivotMask m = random_pivots(s.response_tokens(), count,
                                base + static_cast<uint64_t>(i), half_width);
    masks.push_back(offset_mask(std::move(m), s.resp_begin));
  }
  return masks;
}

}  // namespace mucrasp
