// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures and independent oracles for the unit suites. Everything in
// here recomputes results from first principles (finite differences, scalar
// log-sum-exp, exhaustive search) rather than calling back into the code
// under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mucrasp/common.hpp"
#include "mucrasp/config.hpp"
#include "mucrasp/corpus.hpp"
#include "mucrasp/model.hpp"
#include "mucrasp/units.hpp"

namespace testing {

// Small architecture for gradient checks and hand-walked slices: one layer,
// one KV group, two query heads, six MLP neurons.
inline mucrasp::ModelConfig tiny_config() {
  mucrasp::ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 8;
  cfg.n_q_heads = 2;
  cfg.n_kv_groups = 1;
  cfg.head_dim = 4;
  cfg.d_mlp = 6;
  cfg.vocab_size = 259;
  cfg.max_seq = 64;
  cfg.n_vision_tokens = 2;
  cfg.fill_uniform();
  cfg.validate();
  return cfg;
}

// Two layers so depth-dependent logic (priors, profiles) has structure.
inline mucrasp::ModelConfig small_config() {
  mucrasp::ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 16;
  cfg.n_q_heads = 4;
  cfg.n_kv_groups = 2;
  cfg.head_dim = 4;
  cfg.d_mlp = 10;
  cfg.vocab_size = 259;
  cfg.max_seq = 96;
  cfg.n_vision_tokens = 2;
  cfg.fill_uniform();
  cfg.validate();
  return cfg;
}

// Deterministic hand-rolled sample with known text. Marker-bearing by
// default so pivot detection uses the marker path.
inline mucrasp::CalibrationSample make_sample(const mucrasp::ModelConfig& cfg,
                                              uint64_t seed,
                                              const char* response =
                                                  "1. Two cats.\n"
                                                  "2. Asleep.\n"
                                                  "Thus two.\n"
                                                  "Answer: two") {
  mucrasp::CalibrationSample s;
  mucrasp::Rng rng(seed);
  s.vision_embeddings.resize(cfg.n_vision_tokens);
  for (auto& row : s.vision_embeddings) {
    row.resize(cfg.d_model);
    for (double& x : row) x = rng.normal(0.0, 0.3);
  }
  s.prompt_text = "How many cats?";
  s.response_text = response;
  s.latent_answer = 2;
  s.finalize();
  return s;
}

inline mucrasp::Corpus make_corpus(const mucrasp::ModelConfig& cfg, int n,
                                   uint64_t seed) {
  mucrasp::Corpus c;
  c.seed = seed;
  for (int i = 0; i < n; ++i) c.samples.push_back(make_sample(cfg, seed + i));
  return c;
}

// Flat view over every weight tensor, so finite differences can perturb any
// coordinate by global index. Order matches the checkpoint manifest.
inline std::vector<double*> weight_coordinates(mucrasp::ModelWeights& w) {
  std::vector<double*> out;
  auto add_mat = [&](mucrasp::Matrix& m) {
    for (double& x : m.data) out.push_back(&x);
  };
  auto add_vec = [&](std::vector<double>& v) {
    for (double& x : v) out.push_back(&x);
  };
  add_mat(w.token_embedding);
  add_mat(w.pos_embedding);
  for (auto& layer : w.layers) {
    add_mat(layer.w_q);
    add_mat(layer.w_k);
    add_mat(layer.w_v);
    add_mat(layer.w_o);
    add_mat(layer.w_gate);
    add_mat(layer.w_up);
    add_mat(layer.w_down);
    add_vec(layer.norm_attn);
    add_vec(layer.norm_mlp);
  }
  add_vec(w.final_norm);
  add_mat(w.output_head);
  return out;
}

inline std::vector<const double*> weight_coordinates(const mucrasp::ModelWeights& w) {
  auto mut = weight_coordinates(const_cast<mucrasp::ModelWeights&>(w));
  return {mut.begin(), mut.end()};
}

// Central-difference derivative of the masked loss w.r.t. one coordinate.
inline double fd_gradient(mucrasp::ModelWeights& w, const mucrasp::ModelConfig& cfg,
                          const mucrasp::CalibrationSample& s,
                          mucrasp::LossKind kind, double* coord,
                          double h = 1e-5) {
  const double saved = *coord;
  auto eval = [&](double value) {
    *coord = value;
    mucrasp::ForwardTrace tr = mucrasp::forward(w, cfg, s.token_ids,
                                                s.vision_embeddings);
    tr.loss_mask = s.loss_mask;
    return mucrasp::loss(tr, s.full_targets, kind);
  };
  const double up = eval(saved + h);
  const double down = eval(saved - h);
  *coord = saved;
  return (up - down) / (2.0 * h);
}

// |a - b| relative to the larger magnitude, floored so that a pair of
// near-zero values compares as equal.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Exact 0/1 knapsack by dynamic programming over capacity. Values must be
// nonnegative. Intended for small instances only.
inline double knapsack_opt(const std::vector<long long>& costs,
                           const std::vector<double>& values,
                           long long budget) {
  std::vector<double> dp(static_cast<size_t>(budget) + 1, 0.0);
  for (size_t i = 0; i < costs.size(); ++i) {
    if (costs[i] > budget) continue;
    for (long long c = budget; c >= costs[i]; --c) {
      dp[c] = std::max(dp[c], dp[c - costs[i]] + values[i]);
    }
  }
  return dp[static_cast<size_t>(budget)];
}

// Scalar reference NLL: mean or sum over masked positions of
// -log softmax(logits[t-1])[target[t]], accumulated in long double.
inline double reference_nll(const mucrasp::Matrix& logits,
                            const std::vector<uint8_t>& mask,
                            std::span<const int> targets,
                            mucrasp::LossKind kind) {
  long double total = 0.0L;
  long long count = 0;
  for (int t = 0; t < logits.rows; ++t) {
    if (t + 1 >= static_cast<int>(mask.size()) || !mask[t + 1]) continue;
    const double* row = logits.row(t);
    long double mx = row[0];
    for (int v = 1; v < logits.cols; ++v) mx = std::max<long double>(mx, row[v]);
    long double lse = 0.0L;
    for (int v = 0; v < logits.cols; ++v) lse += expl(row[v] - mx);
    lse = logl(lse) + mx;
    total += lse - row[targets[t + 1]];
    ++count;
  }
  if (kind == mucrasp::LossKind::mean && count > 0)
    return static_cast<double>(total / count);
  return static_cast<double>(total);
}

}  // namespace testing
