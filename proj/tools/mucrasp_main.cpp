// SPDX-License-Identifier: Apache-2.0
//
// Command-line workbench: synthetic data generation, SGD training, unit
// scoring, plan building + pruning, evaluation, MLP zero-out ablations,
// multi-method comparison, and report merging.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI/CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mucrasp/allocator.hpp"
#include "mucrasp/attribution.hpp"
#include "mucrasp/checkpoint.hpp"
#include "mucrasp/common.hpp"
#include "mucrasp/corpus.hpp"
#include "mucrasp/evaluation.hpp"
#include "mucrasp/model.hpp"
#include "mucrasp/profiling.hpp"
#include "mucrasp/report.hpp"
#include "mucrasp/serialize.hpp"
#include "mucrasp/train.hpp"
#include "mucrasp/units.hpp"

namespace {

using namespace mucrasp;
using nlohmann::json;

// MUCRASP_SEED replaces the built-in default; an explicit --seed still wins.
uint64_t default_seed() {
  const char* env = std::getenv("MUCRASP_SEED");
  if (!env || !*env) return 42;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0')
    throw MucraspError("MUCRASP_SEED must be a nonnegative integer, got '" +
                       std::string(env) + "'");
  return static_cast<uint64_t>(v);
}

struct CommonPaths {
  std::string model = "assets/toy_model.ckpt";
  std::string data = "assets/toy_corpus.jsonl";
};

std::pair<ModelConfig, ModelWeights> load_model(const std::string& path) {
  return load_checkpoint(path);
}

// --- gen-data ---------------------------------------------------------------

struct GenDataOpts {
  std::string out = "corpus.jsonl";
  std::string model;  // optional shape source
  int n = 128;
  uint64_t seed = 42;
};

void run_gen_data(const GenDataOpts& o) {
  const ModelConfig cfg =
      o.model.empty() ? ModelConfig::toy_default() : load_model(o.model).first;
  const Corpus corpus = generate_synthetic_corpus(o.seed, o.n, cfg);
  save_corpus(corpus, o.out);
  std::cout << "generated " << corpus.samples.size() << " samples (seed "
            << o.seed << ") -> " << o.out << "\n";
}

// --- train -------------------------------------------------------------------

struct TrainOpts {
  std::string data = "assets/toy_corpus.jsonl";
  std::string out = "model.ckpt";
  std::string model;      // optional warm start
  std::string curve_out;  // optional loss-curve JSON
  std::string precision;
  TrainOptions train;
};

void run_train(const TrainOpts& o) {
  const Corpus corpus = load_corpus(o.data);
  ModelConfig cfg;
  ModelWeights w;
  if (o.model.empty()) {
    cfg = ModelConfig::toy_default();
    w = init_weights(cfg, o.train.seed);
  } else {
    std::tie(cfg, w) = load_model(o.model);
  }
  if (!o.precision.empty()) cfg.precision = precision_from_name(o.precision);

  const TrainStats stats = train(w, cfg, corpus, o.train);
  save_checkpoint(o.out, cfg, w);
  if (!o.curve_out.empty()) {
    json j = {{"schema_version", kSchemaVersion},
              {"kind", "train_curve"},
              {"step_losses", stats.step_losses},
              {"moving_average", stats.moving_average},
              {"initial_perplexity", stats.initial_perplexity},
              {"final_perplexity", stats.final_perplexity},
              {"seed", o.train.seed}};
    atomic_write_text(o.curve_out, j.dump(2) + "\n");
  }
  std::cout << "trained " << o.train.steps << " steps: perplexity "
            << stats.initial_perplexity << " -> " << stats.final_perplexity
            << " -> " << o.out;
  if (!o.curve_out.empty()) std::cout << " (curve " << o.curve_out << ")";
  std::cout << "\n";
}

// --- score -------------------------------------------------------------------

struct ScoreOpts {
  CommonPaths paths;
  std::string mode = "global";
  std::string out = "scores.json";
  int window = 8;
  int min_markers = 2;
  bool attn_qo_only = false;
  int jobs = 1;
};

void run_score(const ScoreOpts& o) {
  auto [cfg, w] = load_model(o.paths.model);
  const Corpus corpus = load_corpus(o.paths.data);
  AttributionOptions opts;
  opts.attn_qo_only = o.attn_qo_only;
  opts.jobs = o.jobs;

  ImportanceTable table;
  if (o.mode == "global") {
    table = global_attribution(w, cfg, corpus, opts);
  } else if (o.mode == "pivot") {
    const std::vector<PivotMask> masks =
        detect_corpus_pivots(corpus, o.window, o.min_markers);
    table = pivot_attribution(w, cfg, corpus, masks, opts);
  } else {
    table = magnitude_scores(w, cfg);
  }
  atomic_write_text(o.out, importance_to_json(table));
  std::cout << "scored " << table.units.size() << " units (" << o.mode
            << ") -> " << o.out << "\n";
}

// --- prune -------------------------------------------------------------------

struct PruneOpts {
  CommonPaths paths;
  std::string plan_out = "plan.json";
  std::string model_out = "pruned.ckpt";
  std::string retention_out = "retention.json";
  std::string precision;
  PruningConfig config;
};

void run_prune(const PruneOpts& o) {
  auto [cfg, w] = load_model(o.paths.model);
  const Corpus corpus = load_corpus(o.paths.data);

  const PruningPlan plan = build_plan(w, cfg, corpus, o.config);
  atomic_write_text(o.plan_out, plan_to_json(plan));

  auto [pruned_cfg, pruned_w] = apply_prune(cfg, w, plan_keep_set(plan));
  if (!o.precision.empty())
    pruned_cfg.precision = precision_from_name(o.precision);
  save_checkpoint(o.model_out, pruned_cfg, pruned_w);

  atomic_write_text(o.retention_out, retention_to_json(retention_report(plan)));

  std::cout << "pruned at S=" << o.config.S << " ("
            << scoring_name(o.config.scoring) << "): kept " << plan.kept_params
            << "/" << plan.prunable_params_total
            << " prunable params (budget " << plan.budget << ") -> "
            << o.plan_out << ", " << o.model_out << ", " << o.retention_out
            << "\n";
}

// --- eval --------------------------------------------------------------------

struct EvalOpts {
  std::string dense = "assets/toy_model.ckpt";
  std::string pruned;
  std::string data = "assets/toy_corpus.jsonl";
  std::string plan;   // optional: attaches retention and row identity
  std::string label;  // optional row identity override
  std::string out = "eval.json";
  int jobs = 1;
};

void run_eval(const EvalOpts& o) {
  auto [dense_cfg, dense_w] = load_model(o.dense);
  auto [pruned_cfg, pruned_w] = load_model(o.pruned);
  const Corpus corpus = load_corpus(o.data);

  EvalReport report = evaluate_pruned(dense_w, dense_cfg, pruned_w, pruned_cfg,
                                      corpus, o.jobs);
  std::string method = o.label;
  double S = std::nan("");
  if (!o.plan.empty()) {
    const PruningPlan plan = plan_from_json(read_text_file(o.plan));
    report.retention = retention_report(plan);
    if (method.empty()) method = scoring_name(plan.config.scoring);
    S = plan.config.S;
  }
  atomic_write_text(o.out, eval_report_to_json(report, method, S));
  std::cout << "eval: perplexity " << report.perplexity << " (dense "
            << report.dense_perplexity << "), mean KL " << report.mean_kl
            << " -> " << o.out << "\n";
}

// --- ablate ------------------------------------------------------------------

struct AblateOpts {
  CommonPaths paths;
  std::string out = "ablate.json";
  int window_len = 4;
  int jobs = 1;
};

void run_ablate(const AblateOpts& o) {
  auto [cfg, w] = load_model(o.paths.model);
  const Corpus corpus = load_corpus(o.paths.data);

  std::vector<AblationRow> rows;
  const int last_start = o.window_len == 0 ? 0 : cfg.n_layers - o.window_len;
  for (int start = 0; start <= last_start; ++start) {
    AblationRow row;
    row.window_start = start;
    row.window_len = o.window_len;
    row.report = zero_out_ablation(w, cfg, corpus, start, o.window_len, o.jobs);
    rows.push_back(std::move(row));
  }
  atomic_write_text(o.out, ablation_rows_to_json(rows));
  std::cout << "ablated " << rows.size() << " window position(s) of length "
            << o.window_len << " -> " << o.out << "\n";
}

// --- compare -----------------------------------------------------------------

struct CompareOpts {
  CommonPaths paths;
  std::string methods = "mucrasp,taylor,magnitude";
  std::string out = "compare.json";
  std::string csv_out = "compare.csv";
  PruningConfig base;  // S, seed, jobs and shared knobs for every method
};

// Token grammar: name[:key=value[:key=value...]] with ',' separating methods.
// Keys: pivot, cmds, allocation, window, gamma_base, rho, min_markers,
// attn_qo_only.
MethodSpec parse_method_token(const std::string& token,
                              const PruningConfig& base) {
  MethodSpec spec;
  spec.label = token;
  spec.config = base;

  std::vector<std::string> parts;
  std::stringstream ss(token);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (parts.empty()) throw MucraspError("compare: empty method token");

  spec.config.scoring = scoring_from_name(parts[0]);
  for (size_t i = 1; i < parts.size(); ++i) {
    const size_t eq = parts[i].find('=');
    if (eq == std::string::npos)
      throw MucraspError("compare: method option '" + parts[i] +
                         "' is not key=value");
    const std::string key = parts[i].substr(0, eq);
    const std::string value = parts[i].substr(eq + 1);
    if (key == "pivot") {
      spec.config.pivot_mode = pivot_mode_from_name(value);
    } else if (key == "cmds") {
      if (value != "on" && value != "off")
        throw MucraspError("compare: cmds must be on or off");
      spec.config.cmds_enabled = value == "on";
    } else if (key == "allocation") {
      spec.config.allocation = allocation_from_name(value);
    } else if (key == "window") {
      spec.config.half_width = std::stoi(value);
    } else if (key == "gamma_base") {
      spec.config.gamma_base = std::stod(value);
    } else if (key == "rho") {
      spec.config.rho = std::stod(value);
    } else if (key == "min_markers") {
      spec.config.min_markers = std::stoi(value);
    } else if (key == "attn_qo_only") {
      if (value != "on" && value != "off")
        throw MucraspError("compare: attn_qo_only must be on or off");
      spec.config.attn_qo_only = value == "on";
    } else {
      throw MucraspError("compare: unknown method option '" + key + "'");
    }
  }
  return spec;
}

void run_compare(const CompareOpts& o) {
  auto [cfg, w] = load_model(o.paths.model);
  const Corpus corpus = load_corpus(o.paths.data);

  std::vector<MethodSpec> specs;
  std::stringstream ss(o.methods);
  std::string token;
  while (std::getline(ss, token, ','))
    if (!token.empty()) specs.push_back(parse_method_token(token, o.base));

  const std::vector<CompareRow> rows = compare_methods(w, cfg, corpus, specs);
  atomic_write_text(o.out, compare_rows_to_json(rows));
  atomic_write_text(o.csv_out, compare_rows_to_csv(rows));

  int failures = 0;
  for (const CompareRow& row : rows)
    if (!row.ok) ++failures;
  std::cout << "compared " << rows.size() << " method(s) at S=" << o.base.S;
  if (failures > 0) std::cout << " (" << failures << " failed)";
  std::cout << " -> " << o.out << ", " << o.csv_out << "\n";
}

// --- report ------------------------------------------------------------------

struct ReportOpts {
  std::vector<std::string> inputs;
  std::string out = "report.json";
  std::string csv_out = "report.csv";
};

void run_report(const ReportOpts& o) {
  std::vector<std::string> documents;
  for (const std::string& path : o.inputs)
    documents.push_back(read_text_file(path));
  const MergedReport merged = merge_reports(documents);
  atomic_write_text(o.out, merged.json_text);
  atomic_write_text(o.csv_out, merged.csv_text);
  std::cout << "merged " << o.inputs.size() << " document(s) -> " << o.out
            << ", " << o.csv_out << "\n";
}

void add_common_paths(CLI::App* sub, CommonPaths& paths) {
  sub->add_option("--model", paths.model, "Model checkpoint path")
      ->capture_default_str();
  sub->add_option("--data", paths.data, "Calibration corpus (JSONL)")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured pruning workbench for a toy multimodal decoder"};
  app.require_subcommand(1);

  try {
    const uint64_t seed0 = default_seed();

    GenDataOpts gen;
    gen.seed = seed0;
    CLI::App* gen_cmd =
        app.add_subcommand("gen-data", "Generate a synthetic calibration corpus");
    gen_cmd->set_config("--config");
    gen_cmd->add_option("--out", gen.out, "Output JSONL path")
        ->capture_default_str();
    gen_cmd->add_option("--n", gen.n, "Number of samples")->capture_default_str();
    gen_cmd->add_option("--model", gen.model,
                        "Optional checkpoint whose shape the corpus targets");
    gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
    gen_cmd->callback([&] { run_gen_data(gen); });

    TrainOpts tr;
    tr.train.seed = seed0;
    CLI::App* train_cmd = app.add_subcommand("train", "SGD-train a model");
    train_cmd->set_config("--config");
    train_cmd->add_option("--data", tr.data, "Training corpus (JSONL)")
        ->capture_default_str();
    train_cmd->add_option("--out", tr.out, "Output checkpoint path")
        ->capture_default_str();
    train_cmd->add_option("--model", tr.model, "Optional warm-start checkpoint");
    train_cmd->add_option("--curve-out", tr.curve_out,
                          "Optional loss-curve JSON path");
    train_cmd->add_option("--steps", tr.train.steps, "SGD steps")
        ->capture_default_str();
    train_cmd->add_option("--lr", tr.train.lr, "Learning rate")
        ->capture_default_str();
    train_cmd->add_option("--batch-size", tr.train.batch_size, "Batch size")
        ->capture_default_str();
    train_cmd->add_option("--seed", tr.train.seed, "Random seed")
        ->capture_default_str();
    train_cmd
        ->add_option("--precision", tr.precision,
                     "Checkpoint storage dtype: f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    train_cmd->callback([&] { run_train(tr); });

    ScoreOpts sc;
    CLI::App* score_cmd =
        app.add_subcommand("score", "Write per-unit importance scores");
    score_cmd->set_config("--config");
    add_common_paths(score_cmd, sc.paths);
    score_cmd->add_option("--mode", sc.mode, "global, pivot, or magnitude")
        ->check(CLI::IsMember({"global", "pivot", "magnitude"}))
        ->capture_default_str();
    score_cmd->add_option("--window", sc.window, "Pivot window half-width")
        ->capture_default_str();
    score_cmd
        ->add_option("--min-markers", sc.min_markers,
                     "Marker count below which thirds-fallback fires")
        ->capture_default_str();
    score_cmd->add_flag("--attn-qo-only", sc.attn_qo_only,
                        "Score attention groups on Q/O slices only");
    score_cmd->add_option("--jobs", sc.jobs, "Worker threads")
        ->capture_default_str();
    score_cmd->add_option("--out", sc.out, "Output JSON path")
        ->capture_default_str();
    score_cmd->callback([&] { run_score(sc); });

    PruneOpts pr;
    pr.config.seed = seed0;
    std::string pr_mode = "mucrasp", pr_pivot = "real", pr_alloc = "global";
    bool pr_no_cmds = false;
    CLI::App* prune_cmd =
        app.add_subcommand("prune", "Build a plan and write the pruned model");
    prune_cmd->set_config("--config");
    add_common_paths(prune_cmd, pr.paths);
    prune_cmd->add_option("--ratio", pr.config.S, "Pruning ratio S in (0,1)")
        ->required();
    prune_cmd->add_option("--mode", pr_mode, "mucrasp, taylor, or magnitude")
        ->check(CLI::IsMember({"mucrasp", "taylor", "magnitude"}))
        ->capture_default_str();
    CLI::Option* opt_pivot =
        prune_cmd->add_option("--pivot", pr_pivot, "real, random, or none")
            ->check(CLI::IsMember({"real", "random", "none"}))
            ->capture_default_str();
    CLI::Option* opt_window =
        prune_cmd
            ->add_option("--window", pr.config.half_width,
                         "Pivot window half-width")
            ->capture_default_str();
    CLI::Option* opt_gamma =
        prune_cmd
            ->add_option("--gamma-base", pr.config.gamma_base,
                         "Pivot fusion weight at S=0")
            ->capture_default_str();
    CLI::Option* opt_rho =
        prune_cmd->add_option("--rho", pr.config.rho, "Fusion decay exponent")
            ->capture_default_str();
    CLI::Option* opt_markers =
        prune_cmd
            ->add_option("--min-markers", pr.config.min_markers,
                         "Marker count below which thirds-fallback fires")
            ->capture_default_str();
    CLI::Option* opt_no_cmds = prune_cmd->add_flag(
        "--no-cmds", pr_no_cmds, "Disable the cross-modal protection term");
    CLI::Option* opt_qo = prune_cmd->add_flag(
        "--attn-qo-only", pr.config.attn_qo_only,
        "Score attention groups on Q/O slices only");
    prune_cmd->add_option("--allocation", pr_alloc, "global or layerwise")
        ->check(CLI::IsMember({"global", "layerwise"}))
        ->capture_default_str();
    prune_cmd->add_option("--seed", pr.config.seed, "Random seed")
        ->capture_default_str();
    prune_cmd->add_option("--jobs", pr.config.jobs, "Worker threads")
        ->capture_default_str();
    prune_cmd
        ->add_option("--precision", pr.precision,
                     "Pruned checkpoint storage dtype: f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    prune_cmd->add_option("--plan-out", pr.plan_out, "Plan JSON path")
        ->capture_default_str();
    prune_cmd->add_option("--model-out", pr.model_out, "Pruned checkpoint path")
        ->capture_default_str();
    prune_cmd
        ->add_option("--retention-out", pr.retention_out, "Retention JSON path")
        ->capture_default_str();
    prune_cmd->callback([&] {
      pr.config.scoring = scoring_from_name(pr_mode);
      pr.config.pivot_mode = pivot_mode_from_name(pr_pivot);
      pr.config.allocation = allocation_from_name(pr_alloc);
      pr.config.cmds_enabled = !pr_no_cmds;
      if (pr.config.scoring != Scoring::mucrasp) {
        // The reasoning/cross-modal knobs only exist in the full pipeline;
        // passing them with a baseline scorer is a contradiction, not a no-op.
        const char* mode = pr_mode.c_str();
        auto reject = [&](const CLI::Option* opt, const char* name) {
          if (opt->count() > 0)
            throw MucraspError(std::string("--mode ") + mode +
                               " does not take " + name);
        };
        reject(opt_pivot, "--pivot");
        reject(opt_window, "--window");
        reject(opt_gamma, "--gamma-base");
        reject(opt_rho, "--rho");
        reject(opt_markers, "--min-markers");
        reject(opt_no_cmds, "--no-cmds");
        if (pr.config.scoring == Scoring::magnitude) reject(opt_qo, "--attn-qo-only");
      }
      run_prune(pr);
    });

    EvalOpts ev;
    CLI::App* eval_cmd =
        app.add_subcommand("eval", "Evaluate a pruned model against a reference");
    eval_cmd->set_config("--config");
    eval_cmd->add_option("--dense", ev.dense, "Reference checkpoint")
        ->capture_default_str();
    eval_cmd->add_option("--pruned", ev.pruned, "Checkpoint under evaluation")
        ->required();
    eval_cmd->add_option("--data", ev.data, "Evaluation corpus (JSONL)")
        ->capture_default_str();
    eval_cmd->add_option("--plan", ev.plan,
                         "Optional plan JSON: attaches retention and row identity");
    eval_cmd->add_option("--label", ev.label, "Row identity for report merging");
    eval_cmd->add_option("--jobs", ev.jobs, "Worker threads")
        ->capture_default_str();
    eval_cmd->add_option("--out", ev.out, "Output JSON path")
        ->capture_default_str();
    eval_cmd->callback([&] { run_eval(ev); });

    AblateOpts ab;
    CLI::App* ablate_cmd = app.add_subcommand(
        "ablate", "Zero out sliding MLP windows and evaluate each position");
    ablate_cmd->set_config("--config");
    add_common_paths(ablate_cmd, ab.paths);
    ablate_cmd
        ->add_option("--window-len", ab.window_len, "Layers per zeroed window")
        ->capture_default_str();
    ablate_cmd->add_option("--jobs", ab.jobs, "Worker threads")
        ->capture_default_str();
    ablate_cmd->add_option("--out", ab.out, "Output JSON path")
        ->capture_default_str();
    ablate_cmd->callback([&] { run_ablate(ab); });

    CompareOpts cp;
    cp.base.seed = seed0;
    CLI::App* compare_cmd = app.add_subcommand(
        "compare", "Prune and evaluate several methods on identical inputs");
    compare_cmd->set_config("--config");
    add_common_paths(compare_cmd, cp.paths);
    compare_cmd->add_option("--ratio", cp.base.S, "Pruning ratio S in (0,1)")
        ->required();
    compare_cmd
        ->add_option("--methods", cp.methods,
                     "Comma-separated method tokens, e.g. "
                     "mucrasp,taylor,magnitude or mucrasp:pivot=random")
        ->capture_default_str();
    compare_cmd->add_option("--window", cp.base.half_width,
                            "Pivot window half-width for all methods")
        ->capture_default_str();
    compare_cmd
        ->add_option("--gamma-base", cp.base.gamma_base,
                     "Pivot fusion weight at S=0 for all methods")
        ->capture_default_str();
    compare_cmd->add_option("--rho", cp.base.rho,
                            "Fusion decay exponent for all methods")
        ->capture_default_str();
    compare_cmd->add_option("--seed", cp.base.seed, "Random seed")
        ->capture_default_str();
    compare_cmd->add_option("--jobs", cp.base.jobs, "Worker threads")
        ->capture_default_str();
    compare_cmd->add_option("--out", cp.out, "Output JSON path")
        ->capture_default_str();
    compare_cmd->add_option("--csv-out", cp.csv_out, "Output CSV path")
        ->capture_default_str();
    compare_cmd->callback([&] { run_compare(cp); });

    ReportOpts rp;
    CLI::App* report_cmd = app.add_subcommand(
        "report", "Merge plan/eval/compare/ablate documents into one table");
    report_cmd->add_option("inputs", rp.inputs, "Input JSON documents")
        ->required()
        ->check(CLI::ExistingFile);
    report_cmd->add_option("--out", rp.out, "Output JSON path")
        ->capture_default_str();
    report_cmd->add_option("--csv-out", rp.csv_out, "Output CSV path")
        ->capture_default_str();
    report_cmd->callback([&] { run_report(rp); });

    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
