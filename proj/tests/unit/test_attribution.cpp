// SPDX-License-Identifier: Apache-2.0
#include <doctest/doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "mucrasp/attribution.hpp"
#include "mucrasp/common.hpp"
#include "mucrasp/model.hpp"
#include "mucrasp/pivots.hpp"
#include "mucrasp/units.hpp"

using namespace mucrasp;

namespace {

// Independent slice walk: the parameter coordinates removed with a unit,
// spelled out with explicit index arithmetic.
std::vector<double*> slice_coords(ModelWeights& w, const ModelConfig& cfg,
                                  const StructuralUnit& u, bool include_kv) {
  std::vector<double*> out;
  LayerWeights& lw = w.layers[u.layer];
  if (u.kind == UnitKind::MlpNeuron) {
    for (int c = 0; c < cfg.d_model; ++c) out.push_back(&lw.w_gate.at(u.index, c));
    for (int c = 0; c < cfg.d_model; ++c) out.push_back(&lw.w_up.at(u.index, c));
    for (int r = 0; r < cfg.d_model; ++r) out.push_back(&lw.w_down.at(r, u.index));
    return out;
  }
  const int hd = cfg.head_dim;
  const int qpg = cfg.q_per_group();
  for (int r = u.index * qpg * hd; r < (u.index + 1) * qpg * hd; ++r)
    for (int c = 0; c < cfg.d_model; ++c) out.push_back(&lw.w_q.at(r, c));
  for (int r = 0; r < cfg.d_model; ++r)
    for (int c = u.index * qpg * hd; c < (u.index + 1) * qpg * hd; ++c)
      out.push_back(&lw.w_o.at(r, c));
  if (include_kv) {
    for (int r = u.index * hd; r < (u.index + 1) * hd; ++r)
      for (int c = 0; c < cfg.d_model; ++c) out.push_back(&lw.w_k.at(r, c));
    for (int r = u.index * hd; r < (u.index + 1) * hd; ++r)
      for (int c = 0; c < cfg.d_model; ++c) out.push_back(&lw.w_v.at(r, c));
  }
  return out;
}

}  // namespace

TEST_SUITE("attribution") {

TEST_CASE("global scores match a finite-difference reconstruction") {
  const ModelConfig cfg = testing::tiny_config();
  ModelWeights w = init_weights(cfg, 3);
  const Corpus corpus = testing::make_corpus(cfg, 2, 50);

  const ImportanceTable table = global_attribution(w, cfg, corpus);
  REQUIRE(table.units.size() == enumerate_units(cfg).size());
  REQUIRE(table.sample_count == 2);

  for (size_t ui = 0; ui < table.units.size(); ++ui) {
    const auto coords = slice_coords(w, cfg, table.units[ui], true);
    double want = 0.0;
    for (const CalibrationSample& s : corpus.samples) {
      for (double* coord : coords) {
        const double g =
            testing::fd_gradient(w, cfg, s, LossKind::mean, coord);
        want += std::abs(*coord * g);
      }
    }
    want /= static_cast<double>(corpus.samples.size());
    CHECK_MESSAGE(testing::rel_err(table.scores[ui], want, 1e-10) < 1e-5,
                  "unit ", ui, ": got ", table.scores[ui], " fd ", want);
  }
}

TEST_CASE("duplicating the corpus leaves the mean unchanged") {
  const ModelConfig cfg = testing::tiny_config();
  const ModelWeights w = init_weights(cfg, 4);
  Corpus base = testing::make_corpus(cfg, 2, 60);
  Corpus doubled = base;
  doubled.samples.push_back(base.samples[0]);
  doubled.samples.push_back(base.samples[1]);

  const ImportanceTable a = global_attribution(w, cfg, base);
  const ImportanceTable b = global_attribution(w, cfg, doubled);
  REQUIRE(a.scores.size() == b.scores.size());
  for (size_t i = 0; i < a.scores.size(); ++i)
    CHECK(testing::rel_err(a.scores[i], b.scores[i]) < 1e-12);
}

TEST_CASE("parallel attribution is bitwise deterministic") {
  const ModelConfig cfg = testing::tiny_config();
  const ModelWeights w = init_weights(cfg, 5);
  const Corpus corpus = testing::make_corpus(cfg, 5, 70);

  AttributionOptions one, four;
  one.jobs = 1;
  four.jobs = 4;
  const ImportanceTable a = global_attribution(w, cfg, corpus, one);
  const ImportanceTable b = global_attribution(w, cfg, corpus, four);
  REQUIRE(a.scores == b.scores);
}

TEST_CASE("magnitude scores are the slice l1 norms") {
  const ModelConfig cfg = testing::tiny_config();
  ModelWeights w = init_weights(cfg, 6);
  const ImportanceTable table = magnitude_scores(w, cfg);
  for (size_t ui = 0; ui < table.units.size(); ++ui) {
    const auto coords = slice_coords(w, cfg, table.units[ui], true);
    double want = 0.0;
    for (double* coord : coords) want += std::abs(*coord);
    CHECK(testing::rel_err(table.scores[ui], want) < 1e-12);
  }
  CHECK(table.kind == TableKind::magnitude);
}

TEST_CASE("a full-response window with one pivot scales the global signal") {
  const ModelConfig cfg = testing::tiny_config();
  const ModelWeights w = init_weights(cfg, 7);
  Corpus corpus;
  corpus.samples.push_back(testing::make_sample(cfg, 80));
  const CalibrationSample& s = corpus.samples[0];
  const int R = s.response_tokens();

  PivotMask mask;
  mask.half_width = R;
  mask.source = PivotSource::markers;
  mask.resp_begin = s.resp_begin;
  mask.resp_end = s.resp_end;
  mask.pivot_indices = {s.resp_begin + R / 2};
  for (int t = s.resp_begin; t < s.resp_end; ++t) mask.window.push_back(t);

  const ImportanceTable pivot = pivot_attribution(w, cfg, corpus, {mask});
  const ImportanceTable global = global_attribution(w, cfg, corpus);
  // Window-sum loss over the whole response == R times the token-mean loss,
  // and a single pivot divides by one.
  for (size_t i = 0; i < pivot.scores.size(); ++i)
    CHECK(testing::rel_err(pivot.scores[i], R * global.scores[i]) < 1e-12);
}

TEST_CASE("per-sample weighting divides by the pivot count") {
  const ModelConfig cfg = testing::tiny_config();
  const ModelWeights w = init_weights(cfg, 8);
  Corpus corpus;
  corpus.samples.push_back(testing::make_sample(cfg, 90));
  const CalibrationSample& s = corpus.samples[0];

  PivotMask one;
  one.half_width = 2;
  one.resp_begin = s.resp_begin;
  one.resp_end = s.resp_end;
  one.pivot_indices = {s.resp_begin + 5};
  for (int t = s.resp_begin + 3; t <= s.resp_begin + 7; ++t)
    one.window.push_back(t);

  // Same window, now claimed by three pivots: identical gradients, but the
  // per-sample weight becomes 1/3.
  PivotMask three = one;
  three.pivot_indices = {s.resp_begin + 4, s.resp_begin + 5, s.resp_begin + 6};

  const ImportanceTable t1 = pivot_attribution(w, cfg, corpus, {one});
  const ImportanceTable t3 = pivot_attribution(w, cfg, corpus, {three});
  for (size_t i = 0; i < t1.scores.size(); ++i)
    CHECK(testing::rel_err(t3.scores[i], t1.scores[i] / 3.0) < 1e-12);
}

TEST_CASE("empty-window samples are skipped, not counted") {
  const ModelConfig cfg = testing::tiny_config();
  const ModelWeights w = init_weights(cfg, 9);
  Corpus both = testing::make_corpus(cfg, 2, 100);

  const std::vector<PivotMask> real = detect_corpus_pivots(both, 4, 2);
  std::vector<PivotMask> masks = real;
  masks[1] = PivotMask{};  // empty window: contributes nothing

  Corpus only_first;
  only_first.samples.push_back(both.samples[0]);
  const ImportanceTable skipped = pivot_attribution(w, cfg, both, masks);
  const ImportanceTable direct =
      pivot_attribution(w, cfg, only_first, {real[0]});

  CHECK(skipped.sample_count == 1);
  REQUIRE(skipped.scores == direct.scores);

  // All-empty is an error.
  std::vector<PivotMask> empties(2);
  CHECK_THROWS_AS(pivot_attribution(w, cfg, both, empties), MucraspError);
}

TEST_CASE("pivot masks must be in absolute coordinates") {
  const ModelConfig cfg = testing::tiny_config();
  const ModelWeights w = init_weights(cfg, 10);
  Corpus corpus;
  corpus.samples.push_back(testing::make_sample(cfg, 110));
  const CalibrationSample& s = corpus.samples[0];

  // Response-relative (unshifted) mask: bounds do not match the sample.
  PivotMask rel = random_pivots(s.response_tokens(), 2, 1, 4);
  CHECK_THROWS_AS(pivot_attribution(w, cfg, corpus, {rel}), MucraspError);

  // Window position outside the response span.
  PivotMask bad = offset_mask(rel, s.resp_begin);
  bad.window.push_back(s.resp_begin - 1);
  CHECK_THROWS_AS(pivot_attribution(w, cfg, corpus, {bad}), MucraspError);

  // Mask count mismatch.
  CHECK_THROWS_AS(pivot_attribution(w, cfg, corpus, {}), MucraspError);
}

TEST_CASE("query/output-only scoring drops exactly the K/V contribution") {
  const ModelConfig cfg = testing::tiny_config();
  ModelWeights w = init_weights(cfg, 11);
  const Corpus corpus = testing::make_corpus(cfg, 2, 120);

  AttributionOptions full, qo;
  qo.attn_qo_only = true;
  const ImportanceTable a = global_attribution(w, cfg, corpus, full);
  const ImportanceTable b = global_attribution(w, cfg, corpus, qo);
  for (size_t i = 0; i < a.units.size(); ++i) {
    if (a.units[i].kind == UnitKind::MlpNeuron) {
      CHECK(a.scores[i] == b.scores[i]);
    } else {
      CHECK(b.scores[i] <= a.scores[i]);
      CHECK(b.scores[i] > 0.0);
    }
  }
  // Unit costs are unaffected by the scoring restriction.
  for (size_t i = 0; i < a.units.size(); ++i)
    CHECK(a.units[i].cost == b.units[i].cost);
}

TEST_CASE("normalization divides each kind by its mean") {
  const ModelConfig cfg = testing::small_config();
  ModelWeights w = init_weights(cfg, 12);
  ImportanceTable raw = magnitude_scores(w, cfg);
  const ImportanceTable norm = normalize_importance(raw);
  CHECK(norm.normalized);

  for (UnitKind kind : {UnitKind::MlpNeuron, UnitKind::GqaGroup}) {
    double mean = 0.0;
    int count = 0;
    for (size_t i = 0; i < norm.units.size(); ++i) {
      if (norm.units[i].kind != kind) continue;
      mean += norm.scores[i];
      ++count;
    }
    mean /= count;
    CHECK(testing::rel_err(mean, 1.0) < 1e-12);
  }

  CHECK_THROWS_AS(normalize_importance(norm), MucraspError);

  // An all-zero kind stays zero instead of dividing by zero.
  ImportanceTable zeros = magnitude_scores(w, cfg);
  for (size_t i = 0; i < zeros.units.size(); ++i)
    if (zeros.units[i].kind == UnitKind::GqaGroup) zeros.scores[i] = 0.0;
  const ImportanceTable nz = normalize_importance(zeros);
  for (size_t i = 0; i < nz.units.size(); ++i) {
    if (nz.units[i].kind == UnitKind::GqaGroup)
      CHECK(nz.scores[i] == 0.0);
    else
      CHECK(nz.scores[i] > 0.0);
  }
}

TEST_CASE("importance tables round-trip through JSON") {
  const ModelConfig cfg = testing::tiny_config();
  const ModelWeights w = init_weights(cfg, 13);
  const Corpus corpus = testing::make_corpus(cfg, 2, 130);
  const ImportanceTable table = global_attribution(w, cfg, corpus);

  const ImportanceTable back = importance_from_json(importance_to_json(table));
  CHECK(back.kind == table.kind);
  CHECK(back.sample_count == table.sample_count);
  CHECK(back.normalized == table.normalized);
  REQUIRE(back.units == table.units);
  REQUIRE(back.scores == table.scores);  // shortest-round-trip doubles

  CHECK_THROWS_AS(importance_from_json("{"), MucraspError);
  CHECK_THROWS_AS(importance_from_json("{\"schema_version\":1}"), MucraspError);
}

TEST_CASE("random corpus pivots mirror detection counts deterministically") {
  const ModelConfig cfg = ModelConfig::toy_default();
  const Corpus corpus = generate_synthetic_corpus(5, 6, cfg);

  const auto real = detect_corpus_pivots(corpus, 8, 2);
  const auto r1 = random_corpus_pivots(corpus, 8, 2, 42);
  const auto r2 = random_corpus_pivots(corpus, 8, 2, 42);
  const auto r3 = random_corpus_pivots(corpus, 8, 2, 43);

  REQUIRE(r1.size() == corpus.samples.size());
  bool any_position_diff = false;
  for (size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].pivot_indices.size() == real[i].pivot_indices.size());
    CHECK(r1[i].pivot_indices == r2[i].pivot_indices);
    CHECK(r1[i].source == PivotSource::random);
    CHECK(r1[i].resp_begin == corpus.samples[i].resp_begin);
    CHECK(r1[i].resp_end == corpus.samples[i].resp_end);
    for (int p : r1[i].pivot_indices) {
      CHECK(p >= corpus.samples[i].resp_begin);
      CHECK(p < corpus.samples[i].resp_end);
    }
    if (r1[i].pivot_indices != r3[i].pivot_indices) any_position_diff = true;
    if (r1[i].pivot_indices != real[i].pivot_indices) any_position_diff = true;
  }
  CHECK(any_position_diff);
}

}  // TEST_SUITE
