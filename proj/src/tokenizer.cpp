// SPDX-License-Identifier: Apache-2.0
#include "mucrasp/tokenizer.hpp"

#include "mucrasp/common.hpp"

namespace mucrasp {
namespace tok {

Tokenized tokenize(std::string_view text) {
  Tokenized out;
  out.ids.reserve(text.size());
  out.char_to_token.reserve(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    out.ids.push_back(static_cast<unsigned char>(text[i]));
    out.char_to_token.push_back(static_cast<int>(i));
  }
  return out;
}

std::string detokenize(std::span<const int> ids) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id >= 0 && id < kByteVocab) {
      out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    } else if (id == kBos || id == kEos || id == kPad) {
      continue;  // structural markers carry no text
    } else {
      throw MucraspError("detokenize: id " + std::to_string(id) + " out of vocabulary");
    }
  }
  return out;
}

}  // namespace tok
}  // namespace mucrasp
