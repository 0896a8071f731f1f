// SPDX-License-Identifier: Apache-2.0
#include <doctest/doctest.h>

#include "helpers.hpp"
#include "mucrasp/common.hpp"
#include "mucrasp/units.hpp"

using namespace mucrasp;

TEST_SUITE("units") {

TEST_CASE("costs count exactly the removed parameters") {
  const ModelConfig cfg = testing::small_config();
  // MLP neuron: one gate row + one up row + one down column, d_model each.
  CHECK(mlp_neuron_cost(cfg) == 3LL * cfg.d_model);
  // GQA group: K row block + V row block (head_dim x d_model each) plus the
  // group's query heads' Q rows and O columns.
  const long long kv = 2LL * cfg.head_dim * cfg.d_model;
  const long long qo = 2LL * cfg.q_per_group() * cfg.head_dim * cfg.d_model;
  CHECK(gqa_group_cost(cfg) == kv + qo);
}

TEST_CASE("enumeration is (layer, kind, index) ordered and complete") {
  const ModelConfig cfg = testing::small_config();
  const auto units = enumerate_units(cfg);
  REQUIRE(static_cast<int>(units.size()) ==
          cfg.n_layers * (cfg.d_mlp + cfg.n_kv_groups));

  size_t i = 0;
  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    for (int j = 0; j < cfg.d_mlp; ++j, ++i) {
      CHECK(units[i].kind == UnitKind::MlpNeuron);
      CHECK(units[i].layer == layer);
      CHECK(units[i].index == j);
      CHECK(units[i].cost == mlp_neuron_cost(cfg));
    }
    for (int gidx = 0; gidx < cfg.n_kv_groups; ++gidx, ++i) {
      CHECK(units[i].kind == UnitKind::GqaGroup);
      CHECK(units[i].layer == layer);
      CHECK(units[i].index == gidx);
      CHECK(units[i].cost == gqa_group_cost(cfg));
    }
  }

  long long total = 0;
  for (const auto& u : units) total += u.cost;
  CHECK(total == prunable_params(cfg));
}

TEST_CASE("prunable params equals the attention plus MLP projections") {
  const ModelConfig cfg = testing::small_config();
  const long long attn =
      static_cast<long long>(cfg.n_layers) *
      (2LL * cfg.n_q_heads * cfg.head_dim * cfg.d_model +  // Q rows + O cols
       2LL * cfg.n_kv_groups * cfg.head_dim * cfg.d_model);  // K + V rows
  const long long mlp = 3LL * cfg.n_layers * cfg.d_mlp * cfg.d_model;
  CHECK(prunable_params(cfg) == attn + mlp);
  CHECK(prunable_params(cfg) < total_params(cfg));
}

TEST_CASE("apply_prune slices the right rows and columns") {
  const ModelConfig cfg = testing::tiny_config();
  const ModelWeights w = init_weights(cfg, 5);

  KeepSet keep = KeepSet::all(cfg);
  keep.mlp[0][2] = 0;
  keep.mlp[0][4] = 0;

  auto [pcfg, pw] = apply_prune(cfg, w, keep);
  CHECK(pcfg.mlp_width(0) == cfg.d_mlp - 2);
  CHECK(pcfg.kv_groups(0) == cfg.n_kv_groups);

  // Surviving neuron order is preserved: old row j maps to its rank among
  // kept rows.
  int new_row = 0;
  for (int j = 0; j < cfg.d_mlp; ++j) {
    if (!keep.mlp[0][j]) continue;
    for (int c = 0; c < cfg.d_model; ++c) {
      CHECK(pw.layers[0].w_gate.at(new_row, c) == w.layers[0].w_gate.at(j, c));
      CHECK(pw.layers[0].w_up.at(new_row, c) == w.layers[0].w_up.at(j, c));
      CHECK(pw.layers[0].w_down.at(c, new_row) == w.layers[0].w_down.at(c, j));
    }
    ++new_row;
  }
}

TEST_CASE("apply_prune rejects emptying a layer") {
  const ModelConfig cfg = testing::tiny_config();
  const ModelWeights w = init_weights(cfg, 6);
  KeepSet keep = KeepSet::all(cfg);
  SUBCASE("no MLP neurons") {
    for (int j = 0; j < cfg.d_mlp; ++j) keep.mlp[0][j] = 0;
    CHECK_THROWS_AS(apply_prune(cfg, w, keep), MucraspError);
  }
  SUBCASE("no attention groups") {
    keep.groups[0][0] = 0;  // tiny config has exactly one group
    CHECK_THROWS_AS(apply_prune(cfg, w, keep), MucraspError);
  }
}

TEST_CASE("keep_set_from_units round-trips unit decisions") {
  const ModelConfig cfg = testing::small_config();
  const auto units = enumerate_units(cfg);
  std::vector<uint8_t> kept(units.size(), 1);
  kept[3] = 0;  // layer 0, mlp neuron 3
  const KeepSet ks = keep_set_from_units(cfg, units, kept);
  CHECK(ks.mlp[0][3] == 0);
  CHECK(ks.mlp[0][2] == 1);
  CHECK(ks.groups[0][0] == 1);

  // Mismatched lengths are rejected.
  std::vector<uint8_t> bad(units.size() - 1, 1);
  CHECK_THROWS_AS(keep_set_from_units(cfg, units, bad), MucraspError);
}

TEST_CASE("unit kind names round-trip") {
  CHECK(unit_kind_from_name(unit_kind_name(UnitKind::MlpNeuron)) ==
        UnitKind::MlpNeuron);
  CHECK(unit_kind_from_name(unit_kind_name(UnitKind::GqaGroup)) ==
        UnitKind::GqaGroup);
  CHECK_THROWS_AS(unit_kind_from_name("nope"), MucraspError);
}

}  // TEST_SUITE
