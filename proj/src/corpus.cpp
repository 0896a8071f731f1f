// SPDX-License-Identifier: Apache-2.0
#include "mucrasp/corpus.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mucrasp/common.hpp"
#include "mucrasp/serialize.hpp"
#include "mucrasp/tokenizer.hpp"

namespace mucrasp {

namespace {

using nlohmann::json;

const char* number_word(int n) {
  static const std::array<const char*, 13> kWords = {
      "zero", "one", "two",   "three", "four",  "five",  "six",
      "seven", "eight", "nine", "ten",  "eleven", "twelve"};
  if (n < 0 || n >= static_cast<int>(kWords.size()))
    throw MucraspError("number_word: " + std::to_string(n) + " not supported");
  return kWords[n];
}

std::string fill(std::string tmpl, const std::string& key, const std::string& value) {
  size_t pos;
  while ((pos = tmpl.find(key)) != std::string::npos) tmpl.replace(pos, key.size(), value);
  return tmpl;
}

// Attribute word pairs: (target, distractor). One pair per corpus so the
// model sees a stable task; the latent count is the per-sample variable.
const std::array<std::pair<const char*, const char*>, 4> kAttributePairs = {{
    {"scarlet", "azure"},
    {"striped", "plain"},
    {"rounded", "angular"},
    {"glowing", "matte"},
}};

const std::array<const char*, 3> kPromptTemplates = {
    "How many of the objects are {T}?",
    "Count the {T} items shown in the scene.",
    "Question: how many {T} shapes appear here?",
};

// Each template carries at least one structural delimiter and one logical
// connective, and markers are sparse enough that the union of +/-8 token
// windows stays under 60% of the response.
const std::array<const char*, 3> kResponseTemplates = {
    "1. I observe {N} objects in the scene.\n"
    "2. I check each one for the {T} look.\n"
    "3. I find {K} of them carry it.\n"
    "Therefore, the count is {K}.\n"
    "Final Answer: {K}",

    "Step 1: The image has {N} items.\n"
    "Step 2: I compare each to the {T} look.\n"
    "Step 3: Exactly {K} items match it.\n"
    "Thus, the total comes to {K}.\n"
    "Final Answer: {K}",

    "1. The scene has {N} candidate objects.\n"
    "2. A pass shows {K} {T} objects there.\n"
    "However, the rest read as {D} instead.\n"
    "So the final count is {K}.\n"
    "Final Answer: {K}",
};

std::vector<double> unit_direction(int d, Rng& rng, double norm) {
  std::vector<double> v(d);
  double ss = 0.0;
  for (double& x : v) {
    x = rng.normal();
    ss += x * x;
  }
  const double scale = norm / std::sqrt(ss);
  for (double& x : v) x *= scale;
  return v;
}

}  // namespace

void CalibrationSample::finalize() {
  if (prompt_text.empty()) throw MucraspError("sample: empty prompt");
  if (response_text.empty()) throw MucraspError("sample: empty response");
  if (vision_embeddings.empty()) throw MucraspError("sample: no vision embeddings");

  const tok::Tokenized prompt = tok::tokenize(prompt_text);
  const tok::Tokenized resp = tok::tokenize(response_text);
  const int n_vis = static_cast<int>(vision_embeddings.size());

  token_ids.clear();
  token_ids.push_back(tok::kBos);
  token_ids.insert(token_ids.end(), prompt.ids.begin(), prompt.ids.end());
  const int resp_token_offset = static_cast<int>(token_ids.size());
  token_ids.insert(token_ids.end(), resp.ids.begin(), resp.ids.end());

  resp_begin = n_vis + resp_token_offset;
  resp_end = resp_begin + static_cast<int>(resp.ids.size());

  const int seq = seq_len();
  loss_mask.assign(seq, 0);
  for (int t = resp_begin; t < resp_end; ++t) loss_mask[t] = 1;

  char_to_token.resize(resp.char_to_token.size());
  for (size_t i = 0; i < resp.char_to_token.size(); ++i)
    char_to_token[i] = resp_begin + resp.char_to_token[i];

  full_targets.assign(seq, -1);
  for (size_t i = 0; i < token_ids.size(); ++i)
    full_targets[n_vis + i] = token_ids[i];
}

Corpus generate_synthetic_corpus(uint64_t seed, int n, const ModelConfig& cfg) {
  cfg.validate();
  if (n < 1) throw MucraspError("generate_synthetic_corpus: n must be >= 1");
  if (cfg.n_vision_tokens < 1)
    throw MucraspError("generate_synthetic_corpus: needs at least one vision token");

  Corpus corpus;
  corpus.seed = seed;
  corpus.samples.reserve(n);

  Rng rng(sub_seed(seed, "data"));
  const auto& pair = kAttributePairs[rng.uniform_int(static_cast<int>(kAttributePairs.size()))];
  const std::string target = pair.first;
  const std::string distractor = pair.second;

  // Cluster geometry: two fixed directions, well separated, with small
  // per-sample jitter. The latent count is exactly the number of target rows.
  const double center_norm = 0.25 * std::sqrt(static_cast<double>(cfg.d_model));
  const std::vector<double> target_center = unit_direction(cfg.d_model, rng, center_norm);
  const std::vector<double> distractor_center =
      unit_direction(cfg.d_model, rng, center_norm);
  constexpr double kJitter = 0.05;

  const int max_count = std::min(cfg.n_vision_tokens, 9);
  const std::string n_word = number_word(std::min(cfg.n_vision_tokens, 12));

  for (int s = 0; s < n; ++s) {
    CalibrationSample sample;
    const int k = 1 + rng.uniform_int(max_count);
    sample.latent_answer = k;

    std::vector<int> slots = rng.sample_without_replacement(cfg.n_vision_tokens, k);
    std::vector<uint8_t> is_target(cfg.n_vision_tokens, 0);
    for (int slot : slots) is_target[slot] = 1;

    sample.vision_embeddings.resize(cfg.n_vision_tokens);
    for (int i = 0; i < cfg.n_vision_tokens; ++i) {
      const std::vector<double>& center = is_target[i] ? target_center : distractor_center;
      std::vector<double> e(cfg.d_model);
      for (int j = 0; j < cfg.d_model; ++j) e[j] = center[j] + rng.normal(0.0, kJitter);
      sample.vision_embeddings[i] = std::move(e);
    }

    const std::string k_word = number_word(k);
    std::string prompt = kPromptTemplates[rng.uniform_int(static_cast<int>(kPromptTemplates.size()))];
    prompt = fill(prompt, "{T}", target);

    std::string response = kResponseTemplates[rng.uniform_int(static_cast<int>(kResponseTemplates.size()))];
    response = fill(response, "{N}", n_word);
    response = fill(response, "{T}", target);
    response = fill(response, "{D}", distractor);
    response = fill(response, "{K}", k_word);

    sample.prompt_text = std::move(prompt);
    sample.response_text = std::move(response);
    sample.finalize();
    if (sample.seq_len() > cfg.max_seq)
      throw MucraspError("generate_synthetic_corpus: sample exceeds max_seq");
    corpus.samples.push_back(std::move(sample));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  atomic_write(path, [&](std::ostream& os) {
    for (const CalibrationSample& s : corpus.samples) {
      json line = {
          {"vision_embeddings", s.vision_embeddings},
          {"prompt_text", s.prompt_text},
          {"response_text", s.response_text},
          {"latent_answer", s.latent_answer},
      };
      os << line.dump() << '\n';
    }
  });
}

Corpus load_corpus(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MucraspError("corpus: cannot open " + path);
  Corpus corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw MucraspError("corpus: malformed JSON at " + path + ":" +
                         std::to_string(line_no) + ": " + e.what());
    }
    CalibrationSample s;
    try {
      s.vision_embeddings = j.at("vision_embeddings").get<std::vector<std::vector<double>>>();
      s.prompt_text = j.at("prompt_text").get<std::string>();
      s.response_text = j.at("response_text").get<std::string>();
      s.latent_answer = j.at("latent_answer").get<int>();
    } catch (const json::exception& e) {
      throw MucraspError("corpus: missing or mistyped field at " + path + ":" +
                         std::to_string(line_no) + ": " + e.what());
    }
    s.finalize();
    corpus.samples.push_back(std::move(s));
  }
  if (corpus.samples.empty()) throw MucraspError("corpus: no samples in " + path);
  return corpus;
}

}  // namespace mucrasp
