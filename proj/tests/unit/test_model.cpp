// SPDX-License-Identifier: Apache-2.0
#include <doctest/doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "mucrasp/common.hpp"
#include "mucrasp/model.hpp"
#include "mucrasp/units.hpp"

using namespace mucrasp;

TEST_SUITE("model") {

TEST_CASE("loss matches an independent scalar log-sum-exp") {
  const ModelConfig cfg = testing::tiny_config();
  const ModelWeights w = init_weights(cfg, 3);
  const CalibrationSample s = testing::make_sample(cfg, 5);

  ForwardTrace tr = forward(w, cfg, s.token_ids, s.vision_embeddings);
  tr.loss_mask = s.loss_mask;

  for (LossKind kind : {LossKind::mean, LossKind::sum}) {
    const double got = loss(tr, s.full_targets, kind);
    const double want = testing::reference_nll(tr.logits, s.loss_mask,
                                               s.full_targets, kind);
    CHECK(testing::rel_err(got, want) < 1e-12);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  const ModelConfig cfg = testing::tiny_config();

  for (uint64_t seed : {11u, 12u, 13u}) {
    ModelWeights w = init_weights(cfg, seed);
    const CalibrationSample s = testing::make_sample(cfg, seed + 100);

    ForwardTrace tr = forward(w, cfg, s.token_ids, s.vision_embeddings,
                              TraceMode::train);
    tr.loss_mask = s.loss_mask;
    const GradientTable g = backward(w, cfg, tr, s.full_targets, LossKind::mean);

    const auto coords = testing::weight_coordinates(w);
    GradientTable g_mut = g;  // same layout; lets us index analytic grads flat
    const auto gcoords = testing::weight_coordinates(g_mut);
    REQUIRE(coords.size() == gcoords.size());

    // Deterministic stratified sample across the whole coordinate range, so
    // every tensor family (embeddings, attention, MLP, norms, head) is hit.
    Rng rng(seed * 7 + 1);
    for (int k = 0; k < 60; ++k) {
      const size_t idx = static_cast<size_t>(
          rng.uniform_int(static_cast<int>(coords.size())));
      const double fd = testing::fd_gradient(w, cfg, s, LossKind::mean,
                                             coords[idx]);
      const double an = *gcoords[idx];
      CHECK_MESSAGE(testing::rel_err(fd, an, 1e-6) < 1e-5,
                    "coordinate ", idx, ": fd=", fd, " analytic=", an);
    }
  }
}

TEST_CASE("sum-loss gradients also match finite differences") {
  const ModelConfig cfg = testing::tiny_config();
  ModelWeights w = init_weights(cfg, 21);
  const CalibrationSample s = testing::make_sample(cfg, 22);

  ForwardTrace tr = forward(w, cfg, s.token_ids, s.vision_embeddings,
                            TraceMode::train);
  tr.loss_mask = s.loss_mask;
  const GradientTable g = backward(w, cfg, tr, s.full_targets, LossKind::sum);

  const auto coords = testing::weight_coordinates(w);
  GradientTable g_mut = g;
  const auto gcoords = testing::weight_coordinates(g_mut);
  Rng rng(99);
  for (int k = 0; k < 25; ++k) {
    const size_t idx = static_cast<size_t>(
        rng.uniform_int(static_cast<int>(coords.size())));
    const double fd = testing::fd_gradient(w, cfg, s, LossKind::sum, coords[idx]);
    CHECK(testing::rel_err(fd, *gcoords[idx], 1e-6) < 1e-5);
  }
}

TEST_CASE("masked forward equals the physically pruned model") {
  const ModelConfig cfg = testing::small_config();
  const ModelWeights w = init_weights(cfg, 31);
  const CalibrationSample s = testing::make_sample(cfg, 32);

  Rng rng(33);
  for (int trial = 0; trial < 8; ++trial) {
    KeepSet keep = KeepSet::all(cfg);
    for (int layer = 0; layer < cfg.n_layers; ++layer) {
      // Keep at least one of each so the pruned model stays well-formed.
      for (int j = 0; j < cfg.d_mlp; ++j)
        keep.mlp[layer][j] = rng.uniform() < 0.6 ? 1 : 0;
      keep.mlp[layer][rng.uniform_int(cfg.d_mlp)] = 1;
      for (int gidx = 0; gidx < cfg.n_kv_groups; ++gidx)
        keep.groups[layer][gidx] = rng.uniform() < 0.6 ? 1 : 0;
      keep.groups[layer][rng.uniform_int(cfg.n_kv_groups)] = 1;
    }

    const ForwardTrace masked =
        masked_forward(w, cfg, s.token_ids, s.vision_embeddings, keep);
    auto [pcfg, pw] = apply_prune(cfg, w, keep);
    const ForwardTrace pruned =
        forward(pw, pcfg, s.token_ids, s.vision_embeddings);

    REQUIRE(masked.logits.same_shape(pruned.logits));
    for (size_t i = 0; i < masked.logits.size(); ++i)
      CHECK(testing::rel_err(masked.logits.data[i], pruned.logits.data[i]) <
            1e-5);
  }
}

TEST_CASE("forward validates its inputs") {
  const ModelConfig cfg = testing::tiny_config();
  const ModelWeights w = init_weights(cfg, 41);
  CalibrationSample s = testing::make_sample(cfg, 42);

  SUBCASE("wrong vision row count") {
    auto vis = s.vision_embeddings;
    vis.pop_back();
    CHECK_THROWS_AS(forward(w, cfg, s.token_ids, vis), MucraspError);
  }
  SUBCASE("out-of-range token id") {
    auto ids = s.token_ids;
    ids[0] = cfg.vocab_size;
    CHECK_THROWS_AS(forward(w, cfg, ids, s.vision_embeddings), MucraspError);
  }
  SUBCASE("sequence too long") {
    std::vector<int> ids(cfg.max_seq + 1, 65);
    CHECK_THROWS_AS(forward(w, cfg, ids, s.vision_embeddings), MucraspError);
  }
  SUBCASE("masking position zero is rejected by loss") {
    ForwardTrace tr = forward(w, cfg, s.token_ids, s.vision_embeddings);
    tr.loss_mask = s.loss_mask;
    tr.loss_mask[0] = 1;
    CHECK_THROWS_AS(loss(tr, s.full_targets, LossKind::mean), MucraspError);
  }
}

TEST_CASE("modality tags cover vision then text") {
  const ModelConfig cfg = testing::tiny_config();
  const ModelWeights w = init_weights(cfg, 51);
  const CalibrationSample s = testing::make_sample(cfg, 52);
  const ForwardTrace tr = forward(w, cfg, s.token_ids, s.vision_embeddings);
  REQUIRE(static_cast<int>(tr.tags.size()) == s.seq_len());
  for (int t = 0; t < s.seq_len(); ++t) {
    if (t < cfg.n_vision_tokens)
      CHECK(tr.tags[t] == Modality::vision);
    else
      CHECK(tr.tags[t] == Modality::text);
  }
}

TEST_CASE("axpy_weights is elementwise fused multiply-add") {
  const ModelConfig cfg = testing::tiny_config();
  ModelWeights a = init_weights(cfg, 61);
  const ModelWeights b = init_weights(cfg, 62);
  const ModelWeights a0 = a;
  axpy_weights(a, b, -0.5);
  auto ca = testing::weight_coordinates(a);
  auto c0 = testing::weight_coordinates(a0);
  auto cb = testing::weight_coordinates(b);
  for (size_t i = 0; i < ca.size(); ++i)
    CHECK(*ca[i] == doctest::Approx(*c0[i] - 0.5 * *cb[i]).epsilon(1e-12));
}

TEST_CASE("init_weights is deterministic per seed") {
  const ModelConfig cfg = testing::tiny_config();
  const ModelWeights a = init_weights(cfg, 7);
  const ModelWeights b = init_weights(cfg, 7);
  const ModelWeights c = init_weights(cfg, 8);
  auto ca = testing::weight_coordinates(a);
  auto cb = testing::weight_coordinates(b);
  auto cc = testing::weight_coordinates(c);
  bool any_diff = false;
  for (size_t i = 0; i < ca.size(); ++i) {
    REQUIRE(*ca[i] == *cb[i]);
    if (*ca[i] != *cc[i]) any_diff = true;
  }
  CHECK(any_diff);
}

}  // TEST_SUITE
