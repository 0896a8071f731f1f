// SPDX-License-Identifier: Apache-2.0
#include "mucrasp/pivots.hpp"

#include <algorithm>
#include <regex>

#include "mucrasp/common.hpp"

namespace mucrasp {

namespace {

struct MarkerRule {
  const char* name;
  std::regex re;
};

// Two families: structural delimiters of explicit reasoning steps, and the
// connectives that mark logical transitions. Case-insensitive throughout;
// the en dash variants appear in real model output alongside plain colons.
const std::vector<MarkerRule>& marker_rules() {
  static const auto kFlags = std::regex::ECMAScript | std::regex::icase;
  static const auto kFlagsMl = kFlags | std::regex::multiline;
  static const std::vector<MarkerRule> kRules = [] {
    std::vector<MarkerRule> r;
    r.push_back({"numbered_step", std::regex(R"(^(\d+)[.)]\s)", kFlagsMl)});
    r.push_back({"labelled_step", std::regex(R"(Step\s*\d+\s*(:|–))", kFlags)});
    r.push_back({"sub_step", std::regex(R"((\d+)\.(\d+)\s)", kFlags)});
    r.push_back({"final_answer", std::regex(R"(Final Answer(:|–))", kFlags)});
    r.push_back({"answer_marker", std::regex(R"(\bAnswer\b\s*(:|–))", kFlags)});
    r.push_back({"conclusion_label", std::regex(R"((Conclusion|Summary)(:|–))", kFlags)});
    r.push_back({"think_tag", std::regex(R"(<think>|</think>)", kFlags)});
    r.push_back({"causal", std::regex(R"(\b(Therefore|Thus|Hence)\b)", kFlags)});
    r.push_back({"consequence", std::regex(R"(\b(So|Consequently|As a result)\b)", kFlags)});
    r.push_back({"inference", std::regex(R"(\b(This means|This implies|This suggests)\b)", kFlags)});
    r.push_back({"deduction", std::regex(R"(\b(We can (therefore|thus) conclude)\b)", kFlags)});
    r.push_back({"summary", std::regex(R"(\b(In (summary|conclusion)|To summarize)\b)", kFlags)});
    r.push_back({"transition", std::regex(R"(\b(Next|Now|Moving on|Finally)\b)", kFlags)});
    r.push_back({"contrastive", std::regex(R"(\b(However|Nevertheless|Despite this)\b)", kFlags)});
    r.push_back({"additive", std::regex(R"(\b(Furthermore|Additionally|Moreover)\b)", kFlags)});
    return r;
  }();
  return kRules;
}

std::vector<int> window_union(const std::vector<int>& pivots, int half_width,
                              int lo, int hi) {
  std::vector<uint8_t> in(hi - lo, 0);
  for (int p : pivots) {
    const int a = std::max(lo, p - half_width);
    const int b = std::min(hi - 1, p + half_width);
    for (int t = a; t <= b; ++t) in[t - lo] = 1;
  }
  std::vector<int> w;
  for (int t = lo; t < hi; ++t)
    if (in[t - lo]) w.push_back(t);
  return w;
}

}  // namespace

std::vector<MarkerMatch> scan_markers(std::string_view response_text) {
  std::vector<MarkerMatch> out;
  const std::string text(response_text);
  for (const MarkerRule& rule : marker_rules()) {
    for (auto it = std::sregex_iterator(text.begin(), text.end(), rule.re);
         it != std::sregex_iterator(); ++it) {
      out.push_back({static_cast<int>(it->position(0)), rule.name});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const MarkerMatch& a, const MarkerMatch& b) {
                     return a.char_pos < b.char_pos;
                   });
  return out;
}

PivotMask detect_pivots(std::string_view response_text,
                        std::span<const int> char_to_token, int half_width,
                        int min_markers) {
  if (response_text.empty()) throw MucraspError("detect_pivots: empty response");
  if (char_to_token.size() != response_text.size())
    throw MucraspError("detect_pivots: char_to_token must cover every response byte");
  if (half_width < 0) throw MucraspError("detect_pivots: negative window width");
  for (size_t i = 1; i < char_to_token.size(); ++i) {
    if (char_to_token[i] < char_to_token[i - 1])
      throw MucraspError("detect_pivots: char_to_token must be monotone");
  }

  PivotMask mask;
  mask.half_width = half_width;
  mask.resp_begin = char_to_token.front();
  mask.resp_end = char_to_token.back() + 1;

  const std::vector<MarkerMatch> matches = scan_markers(response_text);
  if (static_cast<int>(matches.size()) >= min_markers) {
    mask.source = PivotSource::markers;
    for (const MarkerMatch& m : matches)
      mask.pivot_indices.push_back(char_to_token[m.char_pos]);
  } else {
    // Equal-thirds fallback: pivots at the two internal boundaries of three
    // equal-length token segments.
    mask.source = PivotSource::fallback_thirds;
    const int len = mask.resp_end - mask.resp_begin;
    mask.pivot_indices.push_back(mask.resp_begin + len / 3);
    mask.pivot_indices.push_back(mask.resp_begin + 2 * len / 3);
  }

  std::sort(mask.pivot_indices.begin(), mask.pivot_indices.end());
  mask.pivot_indices.erase(
      std::unique(mask.pivot_indices.begin(), mask.pivot_indices.end()),
      mask.pivot_indices.end());
  mask.window = window_union(mask.pivot_indices, half_width, mask.resp_begin,
                             mask.resp_end);
  return mask;
}

PivotMask random_pivots(int response_length, int count, uint64_t seed,
                        int half_width) {
  if (response_length < 1) throw MucraspError("random_pivots: empty response");
  if (count < 1 || count > response_length)
    throw MucraspError("random_pivots: count out of [1, response_length]");
  if (half_width < 0) throw MucraspError("random_pivots: negative window width");

  Rng rng(seed);
  PivotMask mask;
  mask.half_width = half_width;
  mask.source = PivotSource::random;
  mask.resp_begin = 0;
  mask.resp_end = response_length;
  mask.pivot_indices = rng.sample_without_replacement(response_length, count);
  std::sort(mask.pivot_indices.begin(), mask.pivot_indices.end());
  mask.window = window_union(mask.pivot_indices, half_width, 0, response_length);
  return mask;
}

PivotMask offset_mask(PivotMask mask, int offset) {
  for (int& p : mask.pivot_indices) p += offset;
  for (int& t : mask.window) t += offset;
  mask.resp_begin += offset;
  mask.resp_end += offset;
  return mask;
}

}  // namespace mucrasp
