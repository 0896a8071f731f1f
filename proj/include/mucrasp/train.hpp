// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "mucrasp/corpus.hpp"
#include "mucrasp/model.hpp"

namespace mucrasp {

struct TrainOptions {
  int steps = 500;
  double lr = 0.5;
  int batch_size = 2;
  uint64_t seed = 42;
};

struct TrainStats {
  std::vector<double> step_losses;          // batch-mean NLL per step
  std::vector<double> moving_average;       // 20-step trailing mean
  double initial_perplexity = 0.0;          // corpus perplexity before step 0
  double final_perplexity = 0.0;            // corpus perplexity after the run
};

// Plain SGD on the masked mean NLL. Batches are drawn per epoch by a seeded
// shuffle; gradients are averaged over the batch. Throws on non-finite loss.
TrainStats train(ModelWeights& w, const ModelConfig& cfg, const Corpus& corpus,
                 const TrainOptions& opts);

}  // namespace mucrasp
