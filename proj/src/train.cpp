// SPDX-License-Identifier: Apache-2.0
#include "mucrasp/train.hpp"

#include <cmath>

#include "mucrasp/common.hpp"
#include "mucrasp/evaluation.hpp"

namespace mucrasp {

TrainStats train(ModelWeights& w, const ModelConfig& cfg, const Corpus& corpus,
                 const TrainOptions& opts) {
  cfg.validate();
  if (corpus.samples.empty()) throw MucraspError("train: empty corpus");
  if (opts.steps < 0) throw MucraspError("train: negative step count");
  if (opts.batch_size < 1) throw MucraspError("train: batch_size must be >= 1");
  if (!(opts.lr > 0.0) || !std::isfinite(opts.lr))
    throw MucraspError("train: learning rate must be positive and finite");

  TrainStats stats;
  stats.initial_perplexity = perplexity(w, cfg, corpus, 1);
  if (opts.steps == 0) {
    stats.final_perplexity = stats.initial_perplexity;
    return stats;
  }

  Rng rng(sub_seed(opts.seed, "train"));
  const int n = static_cast<int>(corpus.samples.size());
  std::vector<int> order;
  size_t cursor = 0;

  auto next_sample = [&]() -> const CalibrationSample& {
    if (cursor >= order.size()) {
      order.resize(n);
      for (int i = 0; i < n; ++i) order[i] = i;
      rng.shuffle(order);
      cursor = 0;
    }
    return corpus.samples[order[cursor++]];
  };

  for (int step = 0; step < opts.steps; ++step) {
    GradientTable batch_grad = zero_gradients(cfg);
    double batch_loss = 0.0;
    for (int b = 0; b < opts.batch_size; ++b) {
      const CalibrationSample& s = next_sample();
      ForwardTrace trace = forward(w, cfg, s.token_ids, s.vision_embeddings,
                                   TraceMode::train);
      trace.loss_mask = s.loss_mask;
      const double l = loss(trace, s.full_targets, LossKind::mean);
      if (!std::isfinite(l))
        throw MucraspError("train: non-finite loss at step " + std::to_string(step));
      batch_loss += l;
      GradientTable g = backward(w, cfg, trace, s.full_targets, LossKind::mean);
      axpy_weights(batch_grad, g, 1.0 / opts.batch_size);
    }
    batch_loss /= opts.batch_size;
    axpy_weights(w, batch_grad, -opts.lr);

    stats.step_losses.push_back(batch_loss);
    const int window = std::min<int>(20, static_cast<int>(stats.step_losses.size()));
    double ma = 0.0;
    for (int i = 0; i < window; ++i)
      ma += stats.step_losses[stats.step_losses.size() - 1 - i];
    stats.moving_average.push_back(ma / window);
  }

  stats.final_perplexity = perplexity(w, cfg, corpus, 1);
  return stats;
}

}  // namespace mucrasp
