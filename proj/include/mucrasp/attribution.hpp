// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mucrasp/corpus.hpp"
#include "mucrasp/pivots.hpp"
#include "mucrasp/units.hpp"

namespace mucrasp {

enum class TableKind : uint8_t { global, pivot, fused, magnitude };

std::string table_kind_name(TableKind k);
TableKind table_kind_from_name(const std::string& name);

// Per-unit importance scores aligned with enumerate_units() order.
struct ImportanceTable {
  TableKind kind = TableKind::global;
  int sample_count = 0;
  bool normalized = false;
  std::vector<StructuralUnit> units;
  std::vector<double> scores;
};

struct AttributionOptions {
  // Restrict the attention slices to Q rows and O columns, dropping the K/V
  // contribution from importance (cost accounting is unaffected).
  bool attn_qo_only = false;
  int jobs = 1;
};

// Mean over samples of the per-unit sum of |w * dL/dw| for the full masked
// response loss (token-mean per sample).
ImportanceTable global_attribution(const ModelWeights& w, const ModelConfig& cfg,
                                   const Corpus& corpus,
                                   const AttributionOptions& opts = {});

// Same aggregate on the window-sum loss around pivots, weighted 1/|I_pivot|
// per sample and divided by the number of contributing samples. masks[i]
// belongs to corpus.samples[i] and must be in absolute sequence coordinates;
// samples with an empty window contribute nothing and do not count.
ImportanceTable pivot_attribution(const ModelWeights& w, const ModelConfig& cfg,
                                  const Corpus& corpus,
                                  const std::vector<PivotMask>& masks,
                                  const AttributionOptions& opts = {});

// Aggregate l1 norm over exactly the unit's cost slices (K/V always included).
ImportanceTable magnitude_scores(const ModelWeights& w, const ModelConfig& cfg);

// Divides each kind's scores by that kind's mean; a kind whose mean is zero
// stays zero. Normalizing an already-normalized table is an error.
ImportanceTable normalize_importance(ImportanceTable table);

std::string importance_to_json(const ImportanceTable& table);
ImportanceTable importance_from_json(const std::string& json_text);

// Builds per-sample pivot masks for a corpus: marker detection per sample,
// or seeded random positions matching the detected count.
std::vector<PivotMask> detect_corpus_pivots(const Corpus& corpus, int half_width,
                                            int min_markers);
std::vector<PivotMask> random_corpus_pivots(const Corpus& corpus, int half_width,
                                            int min_markers, uint64_t seed);

}  // namespace mucrasp
