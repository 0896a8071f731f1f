// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mucrasp {
namespace tok {

// Byte-level tokenizer: ids 0..255 are raw bytes; three reserved specials
// complete the 259-entry vocabulary. Only BOS is emitted by the corpus
// builder; EOS and PAD are reserved.
inline constexpr int kByteVocab = 256;
inline constexpr int kBos = 256;
inline constexpr int kEos = 257;
inline constexpr int kPad = 258;
inline constexpr int kNumSpecials = 3;

struct Tokenized {
  std::vector<int> ids;
  // char_to_token[b] = index of the token covering byte b of the input. For
  // this tokenizer that is the identity; a character (codepoint) maps through
  // its first byte. Total over the input and monotone non-decreasing.
  std::vector<int> char_to_token;
};

Tokenized tokenize(std::string_view text);

// Inverse of tokenize on byte ids; specials are skipped. Out-of-vocabulary
// ids are an error.
std::string detokenize(std::span<const int> ids);

}  // namespace tok
}  // namespace mucrasp
