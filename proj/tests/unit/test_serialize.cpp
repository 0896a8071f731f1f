// SPDX-License-Identifier: Apache-2.0
// Text persistence: atomic file writes, config snapshots, and the report
// merger that joins plan / eval / compare / ablation documents into one table.
#include <doctest/doctest.h>

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "mucrasp/allocator.hpp"
#include "mucrasp/config.hpp"
#include "mucrasp/evaluation.hpp"
#include "mucrasp/report.hpp"
#include "mucrasp/serialize.hpp"

using namespace mucrasp;
namespace fs = std::filesystem;

namespace {

struct ScratchDir {
  fs::path dir;
  ScratchDir() {
    static int counter = 0;
    dir = fs::temp_directory_path() /
          ("mucrasp_serialize_" + std::to_string(::getpid()) + "_" +
           std::to_string(counter++));
    fs::create_directories(dir);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string operator/(const char* name) const { return (dir / name).string(); }
};

void check_config_equal(const ModelConfig& a, const ModelConfig& b) {
  CHECK(a.n_layers == b.n_layers);
  CHECK(a.d_model == b.d_model);
  CHECK(a.n_q_heads == b.n_q_heads);
  CHECK(a.n_kv_groups == b.n_kv_groups);
  CHECK(a.head_dim == b.head_dim);
  CHECK(a.d_mlp == b.d_mlp);
  CHECK(a.vocab_size == b.vocab_size);
  CHECK(a.max_seq == b.max_seq);
  CHECK(a.n_vision_tokens == b.n_vision_tokens);
  CHECK(a.precision == b.precision);
  CHECK(a.layer_kv_groups == b.layer_kv_groups);
  CHECK(a.layer_d_mlp == b.layer_d_mlp);
}

// A comparison row with fully deterministic numbers, for emit/merge tests.
CompareRow sample_row(const char* label, double S, Scoring scoring) {
  CompareRow row;
  row.label = label;
  row.config.S = S;
  row.config.scoring = scoring;
  row.ok = true;
  row.budget = 100;
  row.kept_params = 96;
  row.report.perplexity = 3.5;
  row.report.dense_perplexity = 3.25;
  row.report.mean_kl = 0.0625;
  row.report.total_positions = 12;
  return row;
}

}  // namespace

TEST_CASE("atomic text writes land complete and leave no temporaries") {
  ScratchDir tmp;
  const std::string path = tmp / "out.json";
  atomic_write_text(path, "hello\n");
  CHECK(read_text_file(path) == "hello\n");

  SUBCASE("overwrites replace the previous content") {
    atomic_write_text(path, "second\n");
    CHECK(read_text_file(path) == "second\n");
  }
  SUBCASE("missing parent directories are created") {
    const std::string nested = (tmp.dir / "a" / "b" / "c.txt").string();
    atomic_write_text(nested, "deep");
    CHECK(read_text_file(nested) == "deep");
  }
  SUBCASE("the directory holds only the target afterwards") {
    size_t entries = 0;
    for (const auto& e : fs::directory_iterator(tmp.dir)) {
      (void)e;
      entries += 1;
    }
    CHECK(entries == 1);
  }
  SUBCASE("reading a missing file reports the path") {
    CHECK_THROWS_WITH_AS(read_text_file(tmp / "absent.json"),
                         doctest::Contains("cannot open"), MucraspError);
  }
  SUBCASE("binary-ish content round-trips byte for byte") {
    const std::string blob("a\0b\r\nc", 6);
    atomic_write_text(path, blob);
    CHECK(read_text_file(path) == blob);
  }
}

TEST_CASE("architecture snapshots round-trip through JSON") {
  const ModelConfig cfg = testing::small_config();
  check_config_equal(config_from_json(config_to_json(cfg)), cfg);

  SUBCASE("non-uniform layer widths survive") {
    ModelConfig pruned = cfg;
    pruned.layer_d_mlp = {7, 9};
    pruned.layer_kv_groups = {2, 1};
    ModelConfig back = config_from_json(config_to_json(pruned));
    check_config_equal(back, pruned);
  }
  SUBCASE("the storage precision survives") {
    ModelConfig half = cfg;
    half.precision = Precision::f32;
    CHECK(config_from_json(config_to_json(half)).precision == Precision::f32);
  }
  SUBCASE("malformed documents are rejected with a reason") {
    CHECK_THROWS_WITH_AS(config_from_json("{"),
                         doctest::Contains("config JSON parse error"),
                         MucraspError);
    nlohmann::json j = nlohmann::json::parse(config_to_json(cfg));
    j.erase("d_model");
    CHECK_THROWS_WITH_AS(config_from_json(j.dump()),
                         doctest::Contains("config JSON field error"),
                         MucraspError);
    j = nlohmann::json::parse(config_to_json(cfg));
    j["n_layers"] = "four";
    CHECK_THROWS_AS(config_from_json(j.dump()), MucraspError);
  }
}

TEST_CASE("the report merger joins documents by method and ratio") {
  CompareRow ok = sample_row("mucrasp", 0.5, Scoring::mucrasp);
  CompareRow failed;
  failed.label = "broken";
  failed.config.S = 0.5;
  failed.ok = false;
  failed.error = "safety infeasible: example";
  const std::string compare_doc = compare_rows_to_json({ok, failed});

  SUBCASE("comparison rows pass through with their identity") {
    MergedReport merged = merge_reports({compare_doc});
    const nlohmann::json j = nlohmann::json::parse(merged.json_text);
    CHECK(j.at("kind") == "report");
    REQUIRE(j.at("rows").size() == 2);
    const nlohmann::json& r0 = j.at("rows")[0];
    CHECK(r0.at("method") == "mucrasp");
    CHECK(r0.at("S").get<double>() == 0.5);
    CHECK(r0.at("ok") == true);
    CHECK(r0.at("budget") == 100);
    CHECK(r0.at("perplexity").get<double>() == 3.5);
    CHECK_FALSE(r0.contains("error"));
    const nlohmann::json& r1 = j.at("rows")[1];
    CHECK(r1.at("ok") == false);
    CHECK(r1.at("error") == "safety infeasible: example");
    CHECK_FALSE(r1.contains("perplexity"));
  }

  SUBCASE("a single comparison document merges to a byte-identical CSV") {
    MergedReport merged = merge_reports({compare_doc});
    CHECK(merged.csv_text == compare_rows_to_csv({ok, failed}));
  }

  SUBCASE("merging the same document twice is idempotent") {
    MergedReport once = merge_reports({compare_doc});
    MergedReport twice = merge_reports({compare_doc, compare_doc});
    CHECK(once.json_text == twice.json_text);
    CHECK(once.csv_text == twice.csv_text);
  }

  SUBCASE("plan and evaluation documents land in the same row") {
    const ModelConfig mcfg = testing::tiny_config();
    const ModelWeights w = init_weights(mcfg, 29);
    const Corpus corpus = testing::make_corpus(mcfg, 2, 107);
    PruningConfig cfg;
    cfg.S = 0.3;
    PruningPlan plan = build_plan(w, mcfg, corpus, cfg);

    EvalReport er;
    er.perplexity = 9.5;
    er.dense_perplexity = 9.0;
    er.mean_kl = 0.25;
    er.total_positions = 8;
    const std::string eval_doc = eval_report_to_json(er, "mucrasp", 0.3);

    MergedReport merged = merge_reports({plan_to_json(plan), eval_doc});
    const nlohmann::json j = nlohmann::json::parse(merged.json_text);
    REQUIRE(j.at("rows").size() == 1);
    const nlohmann::json& row = j.at("rows")[0];
    CHECK(row.at("method") == "mucrasp");
    CHECK(row.at("budget").get<long long>() == plan.budget);
    CHECK(row.at("kept_params").get<long long>() == plan.kept_params);
    CHECK(row.at("perplexity").get<double>() == 9.5);
    CHECK(row.at("mean_kl").get<double>() == 0.25);
    CHECK(row.at("scoring") == "mucrasp");
  }

  SUBCASE("evaluation documents without identity keys get defaults") {
    EvalReport er;
    er.perplexity = 1.5;
    er.dense_perplexity = 1.25;
    MergedReport merged = merge_reports({eval_report_to_json(er)});
    const nlohmann::json j = nlohmann::json::parse(merged.json_text);
    REQUIRE(j.at("rows").size() == 1);
    CHECK(j.at("rows")[0].at("method") == "eval");
    CHECK(j.at("rows")[0].at("S").is_null());
    // A null ratio renders as an empty CSV cell.
    const std::string line2 =
        merged.csv_text.substr(merged.csv_text.find('\n') + 1);
    CHECK(line2.substr(0, 6) == "eval,,");
  }

  SUBCASE("ablation rows are keyed by their window") {
    AblationRow row;
    row.window_start = 1;
    row.window_len = 2;
    row.report.perplexity = 4.5;
    row.report.dense_perplexity = 4.0;
    row.report.mean_kl = 0.5;
    MergedReport merged = merge_reports({ablation_rows_to_json({row})});
    const nlohmann::json j = nlohmann::json::parse(merged.json_text);
    REQUIRE(j.at("rows").size() == 1);
    CHECK(j.at("rows")[0].at("method") == "ablate@1+2");
    CHECK(j.at("rows")[0].at("mean_kl").get<double>() == 0.5);
  }

  SUBCASE("contradictory values for one cell are a hard error") {
    EvalReport a;
    a.perplexity = 2.0;
    a.dense_perplexity = 1.5;
    EvalReport b = a;
    b.perplexity = 2.5;
    CHECK_THROWS_WITH_AS(
        merge_reports({eval_report_to_json(a, "m", 0.5),
                       eval_report_to_json(b, "m", 0.5)}),
        doctest::Contains("conflicting values for column 'perplexity'"),
        MucraspError);
  }

  SUBCASE("malformed inputs are rejected with a reason") {
    CHECK_THROWS_WITH_AS(merge_reports({}), "report: no input documents",
                         MucraspError);
    CHECK_THROWS_WITH_AS(merge_reports({"nonsense"}),
                         doctest::Contains("report: invalid JSON input"),
                         MucraspError);
    nlohmann::json j = nlohmann::json::parse(compare_doc);
    j["kind"] = "weights";
    CHECK_THROWS_WITH_AS(merge_reports({j.dump()}),
                         "report: unknown document kind 'weights'", MucraspError);
    j = nlohmann::json::parse(compare_doc);
    j["schema_version"] = 999;
    CHECK_THROWS_WITH_AS(merge_reports({j.dump()}),
                         doctest::Contains("unsupported schema version"),
                         MucraspError);
    j = nlohmann::json::parse(compare_doc);
    j.at("rows")[0].erase("scoring");
    CHECK_THROWS_WITH_AS(merge_reports({j.dump()}),
                         doctest::Contains("report: bad field"), MucraspError);
  }
}
