// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mucrasp/allocator.hpp"
#include "mucrasp/corpus.hpp"
#include "mucrasp/model.hpp"

namespace mucrasp {

// exp of the pooled masked NLL: total response-token NLL over total response
// tokens, across the whole corpus.
double perplexity(const ModelWeights& w, const ModelConfig& cfg,
                  const Corpus& corpus, int jobs = 1);

struct KlHistogram {
  static constexpr int kBins = 64;
  double lo = 0.0;
  double hi = 16.0;
  std::vector<long long> bins = std::vector<long long>(kBins, 0);
  long long overflow = 0;

  void add(double kl);
};

struct KlSummary {
  double mean_kl = 0.0;
  KlHistogram histogram;
  long long dropped_positions = 0;  // non-finite KL values, filtered out
  long long total_positions = 0;    // every masked position seen
};

// Per-position KL(dense ‖ pruned) over the full vocabulary, in nats, at every
// masked response position, predicting position t from logits at t-1. The two
// models may differ in internal widths but must agree on the embedding
// dimension, vocabulary, sequence capacity and vision prefix.
KlSummary kl_report(const ModelWeights& dense_w, const ModelConfig& dense_cfg,
                    const ModelWeights& pruned_w, const ModelConfig& pruned_cfg,
                    const Corpus& corpus, int jobs = 1);

struct RetentionRow {
  int layer = 0;
  UnitKind kind = UnitKind::MlpNeuron;
  int kept = 0;
  int total = 0;
  double fraction = 0.0;
};

std::vector<RetentionRow> retention_report(const PruningPlan& plan);
std::string retention_to_json(const std::vector<RetentionRow>& rows);

struct EvalReport {
  double perplexity = 0.0;        // of the evaluated (pruned/ablated) model
  double dense_perplexity = 0.0;  // of the reference model
  double mean_kl = 0.0;
  KlHistogram histogram;
  long long dropped_positions = 0;
  long long total_positions = 0;
  std::vector<RetentionRow> retention;  // empty when no plan was involved
  double runtime_seconds = 0.0;         // reported under meta, never in payload
};

// PPL of the pruned model plus KL against the reference, in one pass.
EvalReport evaluate_pruned(const ModelWeights& dense_w,
                           const ModelConfig& dense_cfg,
                           const ModelWeights& pruned_w,
                           const ModelConfig& pruned_cfg, const Corpus& corpus,
                           int jobs = 1);

// Evaluates a copy of the model with the MLP projections of layers
// [window_start, window_start + window_len) zeroed, against the untouched
// model. window_len = 0 degrades to a dense-vs-dense self check.
EvalReport zero_out_ablation(const ModelWeights& w, const ModelConfig& cfg,
                             const Corpus& corpus, int window_start,
                             int window_len = 4, int jobs = 1);

struct MethodSpec {
  std::string label;
  PruningConfig config;
};

struct CompareRow {
  std::string label;
  PruningConfig config;
  bool ok = false;
  std::string error;  // failure reason when !ok; other rows still run
  long long budget = 0;
  long long kept_params = 0;
  bool fallback_used = false;
  EvalReport report;
};

// build_plan + apply_prune + evaluate_pruned per method on identical inputs.
std::vector<CompareRow> compare_methods(const ModelWeights& w,
                                        const ModelConfig& mcfg,
                                        const Corpus& corpus,
                                        const std::vector<MethodSpec>& methods);

struct AblationRow {
  int window_start = 0;
  int window_len = 0;
  EvalReport report;
};

// method and S are optional row-identity keys for the report merger; an empty
// method and NaN S are omitted from the document.
std::string eval_report_to_json(const EvalReport& report,
                                const std::string& method = "",
                                double S = std::nan(""));
std::string ablation_rows_to_json(const std::vector<AblationRow>& rows);
std::string compare_rows_to_json(const std::vector<CompareRow>& rows);
std::string compare_rows_to_csv(const std::vector<CompareRow>& rows);

}  // namespace mucrasp
