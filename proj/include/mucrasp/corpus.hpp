// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mucrasp/config.hpp"

namespace mucrasp {

// One calibration example. The stored fields are the four serialized ones;
// everything below them is derived deterministically by finalize() from the
// tokenizer and the sequence layout:
//   [vision embeddings][BOS][prompt bytes][response bytes]
struct CalibrationSample {
  std::vector<std::vector<double>> vision_embeddings;
  std::string prompt_text;
  std::string response_text;
  int latent_answer = 0;

  // Derived:
  std::vector<int> token_ids;       // BOS + prompt + response bytes
  std::vector<uint8_t> loss_mask;   // sequence-aligned; true exactly on response bytes
  std::vector<int> char_to_token;   // response byte index -> absolute sequence position
  std::vector<int> full_targets;    // sequence-aligned token ids; -1 at vision positions
  int resp_begin = 0;               // absolute span of the response region
  int resp_end = 0;

  int seq_len() const { return static_cast<int>(vision_embeddings.size() + token_ids.size()); }
  int response_tokens() const { return resp_end - resp_begin; }

  void finalize();
};

struct Corpus {
  std::vector<CalibrationSample> samples;
  uint64_t seed = 0;
};

// Counting task: k of the vision embeddings are drawn from a target cluster,
// the rest from a distractor cluster; the response reasons step by step and
// ends with the count spelled out. Deterministic given (seed, n, cfg).
Corpus generate_synthetic_corpus(uint64_t seed, int n, const ModelConfig& cfg);

// JSONL, one object per line with keys vision_embeddings, prompt_text,
// response_text, latent_answer.
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

}  // namespace mucrasp
