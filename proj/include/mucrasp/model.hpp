// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mucrasp/config.hpp"
#include "mucrasp/matrix.hpp"

namespace mucrasp {

// All projections are stored [out_features x in_features] and applied as
// y = x * W^T, so unit slicing is: gate/up row j and down column j for MLP
// neuron j; K/V rows, Q rows and O columns of a group's query heads for a
// GQA group. The output head is [d_model x vocab] and applied as y = x * W.
struct LayerWeights {
  Matrix w_q;     // [q_heads*head_dim x d_model]
  Matrix w_k;     // [kv_groups*head_dim x d_model]
  Matrix w_v;     // [kv_groups*head_dim x d_model]
  Matrix w_o;     // [d_model x q_heads*head_dim]
  Matrix w_gate;  // [d_mlp x d_model]
  Matrix w_up;    // [d_mlp x d_model]
  Matrix w_down;  // [d_model x d_mlp]
  std::vector<double> norm_attn;  // RMSNorm scale, [d_model]
  std::vector<double> norm_mlp;   // RMSNorm scale, [d_model]
};

struct ModelWeights {
  Matrix token_embedding;  // [vocab x d_model]
  Matrix pos_embedding;    // [max_seq x d_model]
  std::vector<LayerWeights> layers;
  std::vector<double> final_norm;  // [d_model]
  Matrix output_head;              // [d_model x vocab]
};

// Gradients are shape-congruent with the weights they belong to.
using GradientTable = ModelWeights;

ModelWeights init_weights(const ModelConfig& cfg, uint64_t seed);
GradientTable zero_gradients(const ModelConfig& cfg);

// dst += scale * src over every tensor; shapes must be congruent. Covers both
// SGD updates (scale = -lr) and gradient accumulation.
void axpy_weights(ModelWeights& dst, const ModelWeights& src, double scale);

long long total_params(const ModelConfig& cfg);

enum class Modality : uint8_t { vision, text };

// Activations captured by forward(). Eval mode keeps only what downstream
// consumers read (sublayer outputs, logits); Train mode additionally keeps
// everything backward() needs.
enum class TraceMode { eval, train };

struct LayerTrace {
  Matrix attn_out;  // output of W_O, before the residual add
  Matrix mlp_out;   // output of W_down, before the residual add
  // Train-mode internals:
  Matrix x_in;       // residual stream entering the attention sublayer
  Matrix att_norm;   // RMSNorm output feeding Q/K/V
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per query head, [seq x seq], causal
  Matrix ctx;                 // concatenated head outputs, before W_O
  Matrix x_mid;               // residual stream entering the MLP sublayer
  Matrix mlp_norm;            // RMSNorm output feeding gate/up
  Matrix gate, up, hidden;
  std::vector<double> inv_rms_attn, inv_rms_mlp;  // per position
};

struct ForwardTrace {
  int seq = 0;
  TraceMode mode = TraceMode::eval;
  std::vector<Modality> tags;
  std::vector<uint8_t> loss_mask;  // seq-aligned; set by the caller before loss()
  std::vector<LayerTrace> layers;
  Matrix logits;  // [seq x vocab]
  // Train-mode internals:
  Matrix x0;          // embeddings entering layer 0
  Matrix x_final;     // residual stream entering the final norm
  Matrix final_norm;  // RMSNorm output feeding the head
  std::vector<double> inv_rms_final;
};

// Per-layer keep masks for masked (in-place) pruning. Sized to the model's
// current per-layer widths; 1 = keep, 0 = zero the unit's contribution.
struct KeepSet {
  std::vector<std::vector<uint8_t>> mlp;     // [layer][neuron]
  std::vector<std::vector<uint8_t>> groups;  // [layer][kv group]

  static KeepSet all(const ModelConfig& cfg);
};

// Forward pass over [vision embeddings ++ text tokens]. vision must hold
// exactly cfg.n_vision_tokens rows of width d_model; token ids must be in
// range; total length must fit max_seq. keep == nullptr runs the dense model.
ForwardTrace forward(const ModelWeights& w, const ModelConfig& cfg,
                     std::span<const int> token_ids,
                     const std::vector<std::vector<double>>& vision,
                     TraceMode mode = TraceMode::eval,
                     const KeepSet* keep = nullptr);

inline ForwardTrace masked_forward(const ModelWeights& w, const ModelConfig& cfg,
                                   std::span<const int> token_ids,
                                   const std::vector<std::vector<double>>& vision,
                                   const KeepSet& keep,
                                   TraceMode mode = TraceMode::eval) {
  return forward(w, cfg, token_ids, vision, mode, &keep);
}

enum class LossKind { mean, sum };

// Negative log-likelihood of targets[t] under logits[t-1], over positions
// with loss_mask set. targets is sequence-aligned; entries at unmasked
// positions are ignored. Masking position 0 is an error (nothing precedes it).
double loss(const ForwardTrace& trace, std::span<const int> targets,
            LossKind kind = LossKind::mean);

// Reverse-mode gradients of loss() w.r.t. every weight tensor. The trace must
// have been produced with TraceMode::train and carry the same mask/targets
// view the loss used.
GradientTable backward(const ModelWeights& w, const ModelConfig& cfg,
                       const ForwardTrace& trace, std::span<const int> targets,
                       LossKind kind = LossKind::mean);

}  // namespace mucrasp
