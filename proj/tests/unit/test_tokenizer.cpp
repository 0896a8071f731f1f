// SPDX-License-Identifier: Apache-2.0
#include <doctest/doctest.h>

#include <string>
#include <vector>

#include "mucrasp/common.hpp"
#include "mucrasp/tokenizer.hpp"

using namespace mucrasp;

TEST_SUITE("tokenizer") {

TEST_CASE("byte ids are the identity and round-trip") {
  const std::string text = "Final Answer: f\xC3\xBCnf";  // includes UTF-8 bytes
  const tok::Tokenized t = tok::tokenize(text);
  REQUIRE(t.ids.size() == text.size());
  for (size_t i = 0; i < text.size(); ++i)
    CHECK(t.ids[i] == static_cast<unsigned char>(text[i]));
  CHECK(tok::detokenize(t.ids) == text);
}

TEST_CASE("char_to_token is total, monotone, identity") {
  const std::string text = "abc\ndef";
  const tok::Tokenized t = tok::tokenize(text);
  REQUIRE(t.char_to_token.size() == text.size());
  for (size_t i = 0; i < text.size(); ++i)
    CHECK(t.char_to_token[i] == static_cast<int>(i));
}

TEST_CASE("every byte value survives a round trip") {
  std::string all;
  for (int b = 0; b < 256; ++b) all.push_back(static_cast<char>(b));
  const tok::Tokenized t = tok::tokenize(all);
  CHECK(tok::detokenize(t.ids) == all);
}

TEST_CASE("specials are skipped by detokenize") {
  std::vector<int> ids = {tok::kBos, 'h', 'i', tok::kEos, tok::kPad};
  CHECK(tok::detokenize(ids) == "hi");
}

TEST_CASE("out-of-vocabulary ids are rejected") {
  CHECK_THROWS_AS(tok::detokenize(std::vector<int>{259}), MucraspError);
  CHECK_THROWS_AS(tok::detokenize(std::vector<int>{-1}), MucraspError);
}

TEST_CASE("vocabulary constants line up") {
  CHECK(tok::kByteVocab + tok::kNumSpecials == 259);
  CHECK(tok::kBos == 256);
  CHECK(tok::kEos == 257);
  CHECK(tok::kPad == 258);
}

TEST_CASE("empty input tokenizes to nothing") {
  const tok::Tokenized t = tok::tokenize("");
  CHECK(t.ids.empty());
  CHECK(t.char_to_token.empty());
}

}  // TEST_SUITE
