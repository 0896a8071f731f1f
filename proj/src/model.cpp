// SPDX-License-Identifier: Apache-2.0
#include "mucrasp/model.hpp"

#include <cmath>
#include <string>

#include "mucrasp/common.hpp"

namespace mucrasp {

namespace {

constexpr double kRmsEps = 1e-6;

Matrix init_matrix(int rows, int cols, Rng& rng, double stddev) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.normal(0.0, stddev);
  return m;
}

// y[t,:] = x[t,:] * inv_rms(x[t,:]) * scale, inv_rms returned per position.
void rmsnorm_fwd(const Matrix& x, const std::vector<double>& scale, Matrix& y,
                 std::vector<double>& inv_rms) {
  const int d = x.cols;
  y = Matrix(x.rows, d);
  inv_rms.resize(x.rows);
  for (int t = 0; t < x.rows; ++t) {
    const double* xr = x.row(t);
    double ss = 0.0;
    for (int i = 0; i < d; ++i) ss += xr[i] * xr[i];
    const double r = 1.0 / std::sqrt(ss / d + kRmsEps);
    inv_rms[t] = r;
    double* yr = y.row(t);
    for (int i = 0; i < d; ++i) yr[i] = xr[i] * r * scale[i];
  }
}

// dx += backprop(dy); dscale += accumulated per channel.
void rmsnorm_bwd(const Matrix& x, const std::vector<double>& scale,
                 const std::vector<double>& inv_rms, const Matrix& dy,
                 Matrix& dx, std::vector<double>& dscale) {
  const int d = x.cols;
  for (int t = 0; t < x.rows; ++t) {
    const double* xr = x.row(t);
    const double* dyr = dy.row(t);
    double* dxr = dx.row(t);
    const double r = inv_rms[t];
    double h = 0.0;  // sum_i dy_i * scale_i * x_i
    for (int i = 0; i < d; ++i) h += dyr[i] * scale[i] * xr[i];
    const double k = h * r * r * r / d;
    for (int i = 0; i < d; ++i) {
      dscale[i] += dyr[i] * xr[i] * r;
      dxr[i] += dyr[i] * scale[i] * r - xr[i] * k;
    }
  }
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_inputs(const ModelConfig& cfg, std::span<const int> token_ids,
                  const std::vector<std::vector<double>>& vision) {
  if (static_cast<int>(vision.size()) != cfg.n_vision_tokens) {
    throw MucraspError("forward: expected " + std::to_string(cfg.n_vision_tokens) +
                       " vision embeddings, got " + std::to_string(vision.size()));
  }
  for (const auto& e : vision) {
    if (static_cast<int>(e.size()) != cfg.d_model)
      throw MucraspError("forward: vision embedding dimension mismatch");
  }
  const int seq = static_cast<int>(vision.size() + token_ids.size());
  if (seq < 1) throw MucraspError("forward: empty input");
  if (seq > cfg.max_seq)
    throw MucraspError("forward: sequence length " + std::to_string(seq) +
                       " exceeds max_seq " + std::to_string(cfg.max_seq));
  for (int id : token_ids) {
    if (id < 0 || id >= cfg.vocab_size)
      throw MucraspError("forward: token id " + std::to_string(id) + " out of range");
  }
}

}  // namespace

ModelWeights init_weights(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  constexpr double kInitStd = 0.02;
  Rng rng(sub_seed(seed, "init"));
  ModelWeights w;
  w.token_embedding = init_matrix(cfg.vocab_size, cfg.d_model, rng, kInitStd);
  w.pos_embedding = init_matrix(cfg.max_seq, cfg.d_model, rng, kInitStd);
  w.layers.resize(cfg.n_layers);
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerWeights& lw = w.layers[l];
    lw.w_q = init_matrix(cfg.attn_dim(l), cfg.d_model, rng, kInitStd);
    lw.w_k = init_matrix(cfg.kv_dim(l), cfg.d_model, rng, kInitStd);
    lw.w_v = init_matrix(cfg.kv_dim(l), cfg.d_model, rng, kInitStd);
    lw.w_o = init_matrix(cfg.d_model, cfg.attn_dim(l), rng, kInitStd);
    lw.w_gate = init_matrix(cfg.mlp_width(l), cfg.d_model, rng, kInitStd);
    lw.w_up = init_matrix(cfg.mlp_width(l), cfg.d_model, rng, kInitStd);
    lw.w_down = init_matrix(cfg.d_model, cfg.mlp_width(l), rng, kInitStd);
    lw.norm_attn.assign(cfg.d_model, 1.0);
    lw.norm_mlp.assign(cfg.d_model, 1.0);
  }
  w.final_norm.assign(cfg.d_model, 1.0);
  w.output_head = init_matrix(cfg.d_model, cfg.vocab_size, rng, kInitStd);
  return w;
}

GradientTable zero_gradients(const ModelConfig& cfg) {
  GradientTable g;
  g.token_embedding = Matrix(cfg.vocab_size, cfg.d_model);
  g.pos_embedding = Matrix(cfg.max_seq, cfg.d_model);
  g.layers.resize(cfg.n_layers);
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerWeights& lw = g.layers[l];
    lw.w_q = Matrix(cfg.attn_dim(l), cfg.d_model);
    lw.w_k = Matrix(cfg.kv_dim(l), cfg.d_model);
    lw.w_v = Matrix(cfg.kv_dim(l), cfg.d_model);
    lw.w_o = Matrix(cfg.d_model, cfg.attn_dim(l));
    lw.w_gate = Matrix(cfg.mlp_width(l), cfg.d_model);
    lw.w_up = Matrix(cfg.mlp_width(l), cfg.d_model);
    lw.w_down = Matrix(cfg.d_model, cfg.mlp_width(l));
    lw.norm_attn.assign(cfg.d_model, 0.0);
    lw.norm_mlp.assign(cfg.d_model, 0.0);
  }
  g.final_norm.assign(cfg.d_model, 0.0);
  g.output_head = Matrix(cfg.d_model, cfg.vocab_size);
  return g;
}

void axpy_weights(ModelWeights& dst, const ModelWeights& src, double scale) {
  auto axpy_mat = [scale](Matrix& d, const Matrix& s) {
    if (!d.same_shape(s)) throw MucraspError("axpy_weights: tensor shape mismatch");
    for (size_t i = 0; i < d.data.size(); ++i) d.data[i] += scale * s.data[i];
  };
  auto axpy_vec = [scale](std::vector<double>& d, const std::vector<double>& s) {
    if (d.size() != s.size()) throw MucraspError("axpy_weights: tensor shape mismatch");
    for (size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
  };
  if (dst.layers.size() != src.layers.size())
    throw MucraspError("axpy_weights: layer count mismatch");
  axpy_mat(dst.token_embedding, src.token_embedding);
  axpy_mat(dst.pos_embedding, src.pos_embedding);
  for (size_t l = 0; l < dst.layers.size(); ++l) {
    axpy_mat(dst.layers[l].w_q, src.layers[l].w_q);
    axpy_mat(dst.layers[l].w_k, src.layers[l].w_k);
    axpy_mat(dst.layers[l].w_v, src.layers[l].w_v);
    axpy_mat(dst.layers[l].w_o, src.layers[l].w_o);
    axpy_mat(dst.layers[l].w_gate, src.layers[l].w_gate);
    axpy_mat(dst.layers[l].w_up, src.layers[l].w_up);
    axpy_mat(dst.layers[l].w_down, src.layers[l].w_down);
    axpy_vec(dst.layers[l].norm_attn, src.layers[l].norm_attn);
    axpy_vec(dst.layers[l].norm_mlp, src.layers[l].norm_mlp);
  }
  axpy_vec(dst.final_norm, src.final_norm);
  axpy_mat(dst.output_head, src.output_head);
}

long long total_params(const ModelConfig& cfg) {
  long long n = 0;
  n += static_cast<long long>(cfg.vocab_size) * cfg.d_model;  // token embedding
  n += static_cast<long long>(cfg.max_seq) * cfg.d_model;     // position embedding
  for (int l = 0; l < cfg.n_layers; ++l) {
    n += static_cast<long long>(cfg.attn_dim(l)) * cfg.d_model * 2;  // W_Q, W_O
    n += static_cast<long long>(cfg.kv_dim(l)) * cfg.d_model * 2;    // W_K, W_V
    n += static_cast<long long>(cfg.mlp_width(l)) * cfg.d_model * 3; // gate/up/down
    n += 2LL * cfg.d_model;                                          // norms
  }
  n += cfg.d_model;                                            // final norm
  n += static_cast<long long>(cfg.d_model) * cfg.vocab_size;   // output head
  return n;
}

KeepSet KeepSet::all(const ModelConfig& cfg) {
  KeepSet ks;
  ks.mlp.resize(cfg.n_layers);
  ks.groups.resize(cfg.n_layers);
  for (int l = 0; l < cfg.n_layers; ++l) {
    ks.mlp[l].assign(cfg.mlp_width(l), 1);
    ks.groups[l].assign(cfg.kv_groups(l), 1);
  }
  return ks;
}

ForwardTrace forward(const ModelWeights& w, const ModelConfig& cfg,
                     std::span<const int> token_ids,
                     const std::vector<std::vector<double>>& vision,
                     TraceMode mode, const KeepSet* keep) {
  check_inputs(cfg, token_ids, vision);
  if (keep) {
    for (int l = 0; l < cfg.n_layers; ++l) {
      if (static_cast<int>(keep->mlp[l].size()) != cfg.mlp_width(l) ||
          static_cast<int>(keep->groups[l].size()) != cfg.kv_groups(l))
        throw MucraspError("forward: keep mask shape does not match config");
    }
  }

  const int n_vis = static_cast<int>(vision.size());
  const int seq = n_vis + static_cast<int>(token_ids.size());
  const int d = cfg.d_model;
  const int hd = cfg.head_dim;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
  const bool train = mode == TraceMode::train;

  ForwardTrace tr;
  tr.seq = seq;
  tr.mode = mode;
  tr.tags.resize(seq);
  for (int t = 0; t < seq; ++t)
    tr.tags[t] = t < n_vis ? Modality::vision : Modality::text;
  tr.layers.resize(cfg.n_layers);

  Matrix x(seq, d);
  for (int t = 0; t < seq; ++t) {
    double* xr = x.row(t);
    if (t < n_vis) {
      for (int i = 0; i < d; ++i) xr[i] = vision[t][i];
    } else {
      const double* er = w.token_embedding.row(token_ids[t - n_vis]);
      for (int i = 0; i < d; ++i) xr[i] = er[i];
    }
    const double* pr = w.pos_embedding.row(t);
    for (int i = 0; i < d; ++i) xr[i] += pr[i];
  }
  if (train) tr.x0 = x;

  std::vector<double> scratch_probs;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights& lw = w.layers[l];
    LayerTrace& lt = tr.layers[l];
    const int n_groups = cfg.kv_groups(l);
    const int qpg = cfg.q_per_group();
    const int n_heads = n_groups * qpg;
    const int f = cfg.mlp_width(l);

    if (train) lt.x_in = x;

    Matrix att_norm;
    std::vector<double> inv_rms;
    rmsnorm_fwd(x, lw.norm_attn, att_norm, inv_rms);

    Matrix q, k, v;
    linear_fwd(att_norm, lw.w_q, q);
    linear_fwd(att_norm, lw.w_k, k);
    linear_fwd(att_norm, lw.w_v, v);

    Matrix ctx(seq, n_heads * hd);
    if (train) lt.probs.resize(n_heads);
    for (int h = 0; h < n_heads; ++h) {
      const int g = h / qpg;
      const int qo = h * hd;  // offset of this head in q/ctx rows
      const int ko = g * hd;  // offset of this head's group in k/v rows
      Matrix* probs = nullptr;
      if (train) {
        lt.probs[h] = Matrix(seq, seq);
        probs = &lt.probs[h];
      }
      scratch_probs.resize(seq);
      for (int t = 0; t < seq; ++t) {
        double mx = -1e300;
        for (int s = 0; s <= t; ++s) {
          const double* qr = q.row(t) + qo;
          const double* kr = k.row(s) + ko;
          double sc = 0.0;
          for (int i = 0; i < hd; ++i) sc += qr[i] * kr[i];
          sc *= inv_sqrt_hd;
          scratch_probs[s] = sc;
          if (sc > mx) mx = sc;
        }
        double z = 0.0;
        for (int s = 0; s <= t; ++s) {
          scratch_probs[s] = std::exp(scratch_probs[s] - mx);
          z += scratch_probs[s];
        }
        const double inv_z = 1.0 / z;
        double* cr = ctx.row(t) + qo;
        for (int s = 0; s <= t; ++s) {
          const double p = scratch_probs[s] * inv_z;
          if (probs) probs->at(t, s) = p;
          const double* vr = v.row(s) + ko;
          for (int i = 0; i < hd; ++i) cr[i] += p * vr[i];
        }
      }
    }

    // Masked pruning zeroes a dropped group's head outputs here; the result
    // matches physically slicing the group's K/V rows and Q rows / O columns.
    if (keep) {
      for (int g = 0; g < n_groups; ++g) {
        if (keep->groups[l][g]) continue;
        for (int t = 0; t < seq; ++t) {
          double* cr = ctx.row(t) + g * qpg * hd;
          for (int i = 0; i < qpg * hd; ++i) cr[i] = 0.0;
        }
      }
    }

    Matrix attn_out;
    linear_fwd(ctx, lw.w_o, attn_out);
    lt.attn_out = attn_out;
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += attn_out.data[i];

    if (train) {
      lt.att_norm = std::move(att_norm);
      lt.inv_rms_attn = std::move(inv_rms);
      lt.q = std::move(q);
      lt.k = std::move(k);
      lt.v = std::move(v);
      lt.ctx = std::move(ctx);
      lt.x_mid = x;
    }

    Matrix mlp_norm;
    std::vector<double> inv_rms2;
    rmsnorm_fwd(x, lw.norm_mlp, mlp_norm, inv_rms2);

    Matrix gate, up;
    linear_fwd(mlp_norm, lw.w_gate, gate);
    linear_fwd(mlp_norm, lw.w_up, up);

    Matrix hidden(seq, f);
    for (int t = 0; t < seq; ++t) {
      const double* gr = gate.row(t);
      const double* ur = up.row(t);
      double* hr = hidden.row(t);
      for (int j = 0; j < f; ++j) hr[j] = gr[j] * sigmoid(gr[j]) * ur[j];
    }
    // A dropped neuron contributes nothing to W_down's output.
    if (keep) {
      for (int j = 0; j < f; ++j) {
        if (keep->mlp[l][j]) continue;
        for (int t = 0; t < seq; ++t) hidden.at(t, j) = 0.0;
      }
    }

    Matrix mlp_out;
    linear_fwd(hidden, lw.w_down, mlp_out);
    lt.mlp_out = mlp_out;
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += mlp_out.data[i];

    if (train) {
      lt.mlp_norm = std::move(mlp_norm);
      lt.inv_rms_mlp = std::move(inv_rms2);
      lt.gate = std::move(gate);
      lt.up = std::move(up);
      lt.hidden = std::move(hidden);
    }
  }

  if (train) tr.x_final = x;
  Matrix f_norm;
  std::vector<double> inv_rms_f;
  rmsnorm_fwd(x, w.final_norm, f_norm, inv_rms_f);
  matmul_nn(f_norm, w.output_head, tr.logits);
  if (train) {
    tr.final_norm = std::move(f_norm);
    tr.inv_rms_final = std::move(inv_rms_f);
  }
  return tr;
}

namespace {

// Per-position weight of each masked target in the loss, or empty on error.
void check_loss_args(const ForwardTrace& trace, std::span<const int> targets) {
  if (trace.loss_mask.size() != static_cast<size_t>(trace.seq))
    throw MucraspError("loss: loss_mask length does not match the trace");
  if (targets.size() != static_cast<size_t>(trace.seq))
    throw MucraspError("loss: targets length does not match the trace");
  if (trace.seq > 0 && !trace.loss_mask.empty() && trace.loss_mask[0])
    throw MucraspError("loss: position 0 cannot be a target (no preceding logits)");
  for (int t = 0; t < trace.seq; ++t) {
    if (!trace.loss_mask[t]) continue;
    if (targets[t] < 0 || targets[t] >= trace.logits.cols)
      throw MucraspError("loss: target id out of range at position " + std::to_string(t));
  }
}

double log_sum_exp(const double* row, int n) {
  double mx = row[0];
  for (int i = 1; i < n; ++i)
    if (row[i] > mx) mx = row[i];
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(row[i] - mx);
  return mx + std::log(z);
}

}  // namespace

double loss(const ForwardTrace& trace, std::span<const int> targets, LossKind kind) {
  check_loss_args(trace, targets);
  const int v = trace.logits.cols;
  double total = 0.0;
  long long count = 0;
  for (int t = 1; t < trace.seq; ++t) {
    if (!trace.loss_mask[t]) continue;
    const double* row = trace.logits.row(t - 1);
    total += log_sum_exp(row, v) - row[targets[t]];
    ++count;
  }
  if (count == 0) throw MucraspError("loss: mask selects no positions");
  return kind == LossKind::mean ? total / static_cast<double>(count) : total;
}

GradientTable backward(const ModelWeights& w, const ModelConfig& cfg,
                       const ForwardTrace& trace, std::span<const int> targets,
                       LossKind kind) {
  if (trace.mode != TraceMode::train)
    throw MucraspError("backward: trace was not captured in train mode");
  check_loss_args(trace, targets);

  const int seq = trace.seq;
  const int d = cfg.d_model;
  const int hd = cfg.head_dim;
  const int vocab = cfg.vocab_size;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

  long long count = 0;
  for (int t = 1; t < seq; ++t)
    if (trace.loss_mask[t]) ++count;
  if (count == 0) throw MucraspError("backward: mask selects no positions");
  const double scale = kind == LossKind::mean ? 1.0 / static_cast<double>(count) : 1.0;

  GradientTable g = zero_gradients(cfg);

  // d loss / d logits: softmax(row) minus the one-hot target, per masked row.
  Matrix dlogits(seq, vocab);
  for (int t = 1; t < seq; ++t) {
    if (!trace.loss_mask[t]) continue;
    const double* row = trace.logits.row(t - 1);
    double* drow = dlogits.row(t - 1);
    const double lse = log_sum_exp(row, vocab);
    for (int i = 0; i < vocab; ++i) drow[i] += scale * std::exp(row[i] - lse);
    drow[targets[t]] -= scale;
  }

  // Head and final norm.
  Matrix dx(seq, d);
  matmul_nn_bwd(dlogits, trace.final_norm, w.output_head, dx, g.output_head);
  Matrix dxf(seq, d);
  rmsnorm_bwd(trace.x_final, w.final_norm, trace.inv_rms_final, dx, dxf, g.final_norm);
  dx = std::move(dxf);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const LayerWeights& lw = w.layers[l];
    const LayerTrace& lt = trace.layers[l];
    LayerWeights& gl = g.layers[l];
    const int n_groups = cfg.kv_groups(l);
    const int qpg = cfg.q_per_group();
    const int n_heads = n_groups * qpg;
    const int f = cfg.mlp_width(l);

    // MLP sublayer: dx is the gradient at the residual output.
    const Matrix& d_mlp_out = dx;
    Matrix dhidden(seq, f);
    linear_bwd_weight(d_mlp_out, lt.hidden, gl.w_down);
    linear_bwd_input(d_mlp_out, lw.w_down, dhidden);

    Matrix dgate(seq, f), dup(seq, f);
    for (int t = 0; t < seq; ++t) {
      const double* gr = lt.gate.row(t);
      const double* ur = lt.up.row(t);
      const double* dhr = dhidden.row(t);
      double* dgr = dgate.row(t);
      double* dur = dup.row(t);
      for (int j = 0; j < f; ++j) {
        const double s = sigmoid(gr[j]);
        const double silu = gr[j] * s;
        dgr[j] = dhr[j] * ur[j] * (s + silu * (1.0 - s));  // d silu / d gate
        dur[j] = dhr[j] * silu;
      }
    }

    Matrix dm(seq, d);
    linear_bwd_weight(dgate, lt.mlp_norm, gl.w_gate);
    linear_bwd_input(dgate, lw.w_gate, dm);
    linear_bwd_weight(dup, lt.mlp_norm, gl.w_up);
    linear_bwd_input(dup, lw.w_up, dm);

    // Residual: gradient w.r.t. x_mid = pass-through + norm backprop.
    rmsnorm_bwd(lt.x_mid, lw.norm_mlp, lt.inv_rms_mlp, dm, dx, gl.norm_mlp);

    // Attention sublayer.
    const Matrix& d_attn_out = dx;
    Matrix dctx(seq, n_heads * hd);
    linear_bwd_weight(d_attn_out, lt.ctx, gl.w_o);
    linear_bwd_input(d_attn_out, lw.w_o, dctx);

    Matrix dq(seq, n_heads * hd), dk(seq, n_groups * hd), dv(seq, n_groups * hd);
    std::vector<double> dp(seq), ds(seq);
    for (int h = 0; h < n_heads; ++h) {
      const int gidx = h / qpg;
      const int qo = h * hd;
      const int ko = gidx * hd;
      const Matrix& p = lt.probs[h];
      for (int t = 0; t < seq; ++t) {
        const double* dcr = dctx.row(t) + qo;
        bool any = false;
        for (int i = 0; i < hd; ++i) {
          if (dcr[i] != 0.0) { any = true; break; }
        }
        if (!any) continue;
        const double* pr = p.row(t);
        double dot = 0.0;
        for (int s = 0; s <= t; ++s) {
          const double* vr = lt.v.row(s) + ko;
          double acc = 0.0;
          for (int i = 0; i < hd; ++i) acc += dcr[i] * vr[i];
          dp[s] = acc;
          dot += pr[s] * acc;
          double* dvr = dv.row(s) + ko;
          for (int i = 0; i < hd; ++i) dvr[i] += pr[s] * dcr[i];
        }
        const double* qr = lt.q.row(t) + qo;
        double* dqr = dq.row(t) + qo;
        for (int s = 0; s <= t; ++s) {
          ds[s] = pr[s] * (dp[s] - dot) * inv_sqrt_hd;
          const double* kr = lt.k.row(s) + ko;
          double* dkr = dk.row(s) + ko;
          for (int i = 0; i < hd; ++i) {
            dqr[i] += ds[s] * kr[i];
            dkr[i] += ds[s] * qr[i];
          }
        }
      }
    }

    Matrix da(seq, d);
    linear_bwd_weight(dq, lt.att_norm, gl.w_q);
    linear_bwd_input(dq, lw.w_q, da);
    linear_bwd_weight(dk, lt.att_norm, gl.w_k);
    linear_bwd_input(dk, lw.w_k, da);
    linear_bwd_weight(dv, lt.att_norm, gl.w_v);
    linear_bwd_input(dv, lw.w_v, da);

    Matrix dx_in(seq, d);
    rmsnorm_bwd(lt.x_in, lw.norm_attn, lt.inv_rms_attn, da, dx_in, gl.norm_attn);
    for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dx_in.data[i];
  }

  // Embeddings. targets is the sequence-aligned token view, so text-position
  // entries are the ids whose embedding rows received x0. Vision rows are
  // inputs, not parameters; position embeddings cover every position.
  const int n_vis = cfg.n_vision_tokens;
  for (int t = n_vis; t < seq; ++t) {
    if (targets[t] < 0 || targets[t] >= vocab)
      throw MucraspError("backward: text position " + std::to_string(t) +
                         " carries no valid token id");
  }
  for (int t = 0; t < seq; ++t) {
    const double* dr = dx.row(t);
    double* pr = g.pos_embedding.row(t);
    for (int i = 0; i < d; ++i) pr[i] += dr[i];
    if (t >= n_vis) {
      double* er = g.token_embedding.row(targets[t]);
      for (int i = 0; i < d; ++i) er[i] += dr[i];
    }
  }
  return g;
}

}  // namespace mucrasp
