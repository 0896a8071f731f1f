// SPDX-License-Identifier: Apache-2.0
#include "mucrasp/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "mucrasp/common.hpp"
#include "mucrasp/serialize.hpp"

namespace mucrasp {

namespace {

using nlohmann::json;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

void log_softmax_row(const double* logits, int n, std::vector<double>& out) {
  double mx = logits[0];
  for (int v = 1; v < n; ++v) mx = std::max(mx, logits[v]);
  double sum = 0.0;
  for (int v = 0; v < n; ++v) sum += std::exp(logits[v] - mx);
  const double lse = mx + std::log(sum);
  out.resize(static_cast<size_t>(n));
  for (int v = 0; v < n; ++v) out[static_cast<size_t>(v)] = logits[v] - lse;
}

void check_compatible(const ModelConfig& a, const ModelConfig& b) {
  if (a.vocab_size != b.vocab_size || a.max_seq != b.max_seq ||
      a.n_vision_tokens != b.n_vision_tokens || a.d_model != b.d_model ||
      a.n_layers != b.n_layers)
    throw MucraspError(
        "kl_report: models do not accept the same inputs (vocabulary, "
        "sequence capacity, vision prefix, embedding width and layer count "
        "must match)");
}

json histogram_json(const KlHistogram& h) {
  return {{"lo", h.lo}, {"hi", h.hi}, {"bins", h.bins}, {"overflow", h.overflow}};
}

json retention_json(const std::vector<RetentionRow>& rows) {
  json arr = json::array();
  for (const RetentionRow& r : rows)
    arr.push_back({{"layer", r.layer},
                   {"kind", unit_kind_name(r.kind)},
                   {"kept", r.kept},
                   {"total", r.total},
                   {"fraction", r.fraction}});
  return arr;
}

json report_body_json(const EvalReport& r) {
  return {{"perplexity", r.perplexity},
          {"dense_perplexity", r.dense_perplexity},
          {"mean_kl", r.mean_kl},
          {"histogram", histogram_json(r.histogram)},
          {"dropped_positions", r.dropped_positions},
          {"total_positions", r.total_positions},
          {"retention", retention_json(r.retention)}};
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

// Shortest round-trip decimal form, identical to what the JSON emitters use,
// so a value survives JSON -> report -> CSV byte-for-byte.
std::string csv_number(double v) { return json(v).dump(); }

}  // namespace

void KlHistogram::add(double kl) {
  if (kl >= hi) {
    overflow += 1;
    return;
  }
  const double width = (hi - lo) / kBins;
  int idx = static_cast<int>(std::floor((kl - lo) / width));
  idx = std::max(0, std::min(kBins - 1, idx));
  bins[static_cast<size_t>(idx)] += 1;
}

double perplexity(const ModelWeights& w, const ModelConfig& cfg,
                  const Corpus& corpus, int jobs) {
  if (corpus.samples.empty()) throw MucraspError("perplexity: corpus is empty");
  const int n = static_cast<int>(corpus.samples.size());
  std::vector<double> nll(static_cast<size_t>(n), 0.0);
  std::vector<long long> counts(static_cast<size_t>(n), 0);
  parallel_for(n, jobs, [&](int i) {
    const CalibrationSample& s = corpus.samples[static_cast<size_t>(i)];
    ForwardTrace tr =
        forward(w, cfg, s.token_ids, s.vision_embeddings, TraceMode::eval);
    tr.loss_mask = s.loss_mask;
    nll[static_cast<size_t>(i)] = loss(tr, s.full_targets, LossKind::sum);
    counts[static_cast<size_t>(i)] = s.response_tokens();
  });
  double total = 0.0;
  long long tokens = 0;
  for (int i = 0; i < n; ++i) {
    total += nll[static_cast<size_t>(i)];
    tokens += counts[static_cast<size_t>(i)];
  }
  if (tokens == 0) throw MucraspError("perplexity: no masked positions");
  return std::exp(total / static_cast<double>(tokens));
}

KlSummary kl_report(const ModelWeights& dense_w, const ModelConfig& dense_cfg,
                    const ModelWeights& pruned_w, const ModelConfig& pruned_cfg,
                    const Corpus& corpus, int jobs) {
  if (corpus.samples.empty()) throw MucraspError("kl_report: corpus is empty");
  check_compatible(dense_cfg, pruned_cfg);

  const int n = static_cast<int>(corpus.samples.size());
  std::vector<std::vector<double>> kl_slots(static_cast<size_t>(n));
  parallel_for(n, jobs, [&](int i) {
    const CalibrationSample& s = corpus.samples[static_cast<size_t>(i)];
    ForwardTrace dense_tr = forward(dense_w, dense_cfg, s.token_ids,
                                    s.vision_embeddings, TraceMode::eval);
    ForwardTrace pruned_tr = forward(pruned_w, pruned_cfg, s.token_ids,
                                     s.vision_embeddings, TraceMode::eval);
    std::vector<double> lp, lq;
    std::vector<double>& out = kl_slots[static_cast<size_t>(i)];
    for (int t = 1; t < dense_tr.seq; ++t) {
      if (!s.loss_mask[static_cast<size_t>(t)]) continue;
      log_softmax_row(dense_tr.logits.row(t - 1), dense_cfg.vocab_size, lp);
      log_softmax_row(pruned_tr.logits.row(t - 1), pruned_cfg.vocab_size, lq);
      double kl = 0.0;
      for (int v = 0; v < dense_cfg.vocab_size; ++v) {
        const size_t vi = static_cast<size_t>(v);
        kl += std::exp(lp[vi]) * (lp[vi] - lq[vi]);
      }
      out.push_back(kl);
    }
  });

  KlSummary sum;
  double acc = 0.0;
  long long valid = 0;
  for (const std::vector<double>& slot : kl_slots) {
    for (double kl : slot) {
      sum.total_positions += 1;
      // KL is nonnegative up to summation noise; anything materially negative
      // or non-finite indicates a degenerate distribution and is filtered.
      if (!std::isfinite(kl) || kl < -1e-9) {
        sum.dropped_positions += 1;
        continue;
      }
      kl = std::max(kl, 0.0);
      acc += kl;
      valid += 1;
      sum.histogram.add(kl);
    }
  }
  if (valid == 0)
    throw MucraspError("kl_report: no valid positions after filtering");
  sum.mean_kl = acc / static_cast<double>(valid);
  return sum;
}

std::vector<RetentionRow> retention_report(const PruningPlan& plan) {
  std::map<std::pair<int, int>, RetentionRow> agg;
  for (size_t i = 0; i < plan.units.size(); ++i) {
    const StructuralUnit& u = plan.units[i];
    RetentionRow& row = agg[{u.layer, static_cast<int>(u.kind)}];
    row.layer = u.layer;
    row.kind = u.kind;
    row.total += 1;
    if (plan.kept[i]) row.kept += 1;
  }
  std::vector<RetentionRow> out;
  for (int l = 0; l < plan.model_config.n_layers; ++l) {
    for (UnitKind kind : {UnitKind::MlpNeuron, UnitKind::GqaGroup}) {
      auto it = agg.find({l, static_cast<int>(kind)});
      if (it == agg.end() || it->second.total == 0)
        throw MucraspError("retention_report: layer " + std::to_string(l) +
                           " has no " + unit_kind_name(kind) + " units");
      it->second.fraction = static_cast<double>(it->second.kept) /
                            static_cast<double>(it->second.total);
      out.push_back(it->second);
    }
  }
  return out;
}

std::string retention_to_json(const std::vector<RetentionRow>& rows) {
  json j = {{"schema_version", kSchemaVersion},
            {"kind", "retention"},
            {"rows", retention_json(rows)}};
  return j.dump(2) + "\n";
}

EvalReport evaluate_pruned(const ModelWeights& dense_w,
                           const ModelConfig& dense_cfg,
                           const ModelWeights& pruned_w,
                           const ModelConfig& pruned_cfg, const Corpus& corpus,
                           int jobs) {
  const auto start = std::chrono::steady_clock::now();
  EvalReport r;
  r.perplexity = perplexity(pruned_w, pruned_cfg, corpus, jobs);
  r.dense_perplexity = perplexity(dense_w, dense_cfg, corpus, jobs);
  KlSummary kl = kl_report(dense_w, dense_cfg, pruned_w, pruned_cfg, corpus, jobs);
  r.mean_kl = kl.mean_kl;
  r.histogram = std::move(kl.histogram);
  r.dropped_positions = kl.dropped_positions;
  r.total_positions = kl.total_positions;
  r.runtime_seconds = seconds_since(start);
  return r;
}

EvalReport zero_out_ablation(const ModelWeights& w, const ModelConfig& cfg,
                             const Corpus& corpus, int window_start,
                             int window_len, int jobs) {
  if (window_len < 0)
    throw MucraspError("zero_out_ablation: negative window length");
  if (window_start < 0 || window_start + window_len > cfg.n_layers)
    throw MucraspError("zero_out_ablation: window out of layer range");
  ModelWeights ablated = w;
  for (int l = window_start; l < window_start + window_len; ++l) {
    LayerWeights& lw = ablated.layers[static_cast<size_t>(l)];
    lw.w_gate.zero();
    lw.w_up.zero();
    lw.w_down.zero();
  }
  return evaluate_pruned(w, cfg, ablated, cfg, corpus, jobs);
}

std::vector<CompareRow> compare_methods(const ModelWeights& w,
                                        const ModelConfig& mcfg,
                                        const Corpus& corpus,
                                        const std::vector<MethodSpec>& methods) {
  if (methods.empty())
    throw MucraspError("compare_methods: at least one method required");
  std::vector<CompareRow> rows;
  for (const MethodSpec& m : methods) {
    CompareRow row;
    row.label = m.label;
    row.config = m.config;
    try {
      PruningPlan plan = build_plan(w, mcfg, corpus, m.config);
      auto [pruned_cfg, pruned_w] = apply_prune(mcfg, w, plan_keep_set(plan));
      row.report =
          evaluate_pruned(w, mcfg, pruned_w, pruned_cfg, corpus, m.config.jobs);
      row.report.retention = retention_report(plan);
      row.budget = plan.budget;
      row.kept_params = plan.kept_params;
      row.fallback_used = plan.fallback_used;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string eval_report_to_json(const EvalReport& report,
                                const std::string& method, double S) {
  json j = {{"schema_version", kSchemaVersion},
            {"kind", "eval"},
            {"report", report_body_json(report)},
            {"meta", {{"runtime_seconds", report.runtime_seconds}}}};
  if (!method.empty()) j["method"] = method;
  if (!std::isnan(S)) j["S"] = S;
  return j.dump(2) + "\n";
}

std::string ablation_rows_to_json(const std::vector<AblationRow>& rows) {
  json arr = json::array();
  json runtimes = json::array();
  for (const AblationRow& row : rows) {
    arr.push_back({{"window_start", row.window_start},
                   {"window_len", row.window_len},
                   {"report", report_body_json(row.report)}});
    runtimes.push_back(row.report.runtime_seconds);
  }
  json j = {{"schema_version", kSchemaVersion},
            {"kind", "ablate"},
            {"rows", std::move(arr)},
            {"meta", {{"runtime_seconds", std::move(runtimes)}}}};
  return j.dump(2) + "\n";
}

std::string compare_rows_to_json(const std::vector<CompareRow>& rows) {
  json arr = json::array();
  json runtimes = json::array();
  for (const CompareRow& row : rows) {
    json r = {{"method", row.label},
              {"S", row.config.S},
              {"scoring", scoring_name(row.config.scoring)},
              {"allocation", allocation_name(row.config.allocation)},
              {"pivot_mode", pivot_mode_name(row.config.pivot_mode)},
              {"cmds_enabled", row.config.cmds_enabled},
              {"seed", row.config.seed},
              {"ok", row.ok}};
    if (row.ok) {
      r["budget"] = row.budget;
      r["kept_params"] = row.kept_params;
      r["fallback_used"] = row.fallback_used;
      r["report"] = report_body_json(row.report);
    } else {
      r["error"] = row.error;
    }
    arr.push_back(std::move(r));
    runtimes.push_back(row.report.runtime_seconds);
  }
  json j = {{"schema_version", kSchemaVersion},
            {"kind", "compare"},
            {"rows", std::move(arr)},
            {"meta", {{"runtime_seconds", std::move(runtimes)}}}};
  return j.dump(2) + "\n";
}

std::string compare_rows_to_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "method,S,scoring,allocation,pivot_mode,ok,budget,kept_params,"
         "perplexity,dense_perplexity,mean_kl,dropped_positions,"
         "total_positions,error\n";
  for (const CompareRow& row : rows) {
    out << csv_escape(row.label) << ',' << csv_number(row.config.S) << ','
        << scoring_name(row.config.scoring) << ','
        << allocation_name(row.config.allocation) << ','
        << pivot_mode_name(row.config.pivot_mode) << ','
        << (row.ok ? "true" : "false") << ',';
    if (row.ok) {
      out << row.budget << ',' << row.kept_params << ','
          << csv_number(row.report.perplexity) << ','
          << csv_number(row.report.dense_perplexity) << ','
          << csv_number(row.report.mean_kl) << ','
          << row.report.dropped_positions << ','
          << row.report.total_positions << ',';
    } else {
      out << ",,,,,,,";
    }
    out << csv_escape(row.error) << '\n';
  }
  return out.str();
}

}  // namespace mucrasp
