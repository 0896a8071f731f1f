// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mucrasp {

enum class PivotSource : uint8_t { markers, fallback_thirds, random };

// Token indices are absolute sequence positions when built through a sample's
// char_to_token map, or response-relative when built standalone.
struct PivotMask {
  std::vector<int> pivot_indices;  // sorted, unique
  std::vector<int> window;         // union of +/-W around pivots, clipped to the response
  int half_width = 8;
  PivotSource source = PivotSource::markers;
  int resp_begin = 0;
  int resp_end = 0;  // exclusive
};

struct MarkerMatch {
  int char_pos = 0;  // byte offset of the match start in the response text
  std::string rule;  // which taxonomy rule fired
};

// All taxonomy matches, case-insensitive, in text order (duplicates at the
// same offset possible when rules overlap).
std::vector<MarkerMatch> scan_markers(std::string_view response_text);

// Marker-based detection with equal-thirds fallback: fewer than min_markers
// matches places pivots at the two internal boundaries of three equal token
// segments of the response. char_to_token maps response byte offsets to token
// indices (monotone, total over the response).
PivotMask detect_pivots(std::string_view response_text,
                        std::span<const int> char_to_token, int half_width = 8,
                        int min_markers = 2);

// count distinct uniform positions in [0, response_length); the window is
// built the same way as for detected pivots.
PivotMask random_pivots(int response_length, int count, uint64_t seed,
                        int half_width = 8);

// Shifts a response-relative mask to absolute sequence coordinates.
PivotMask offset_mask(PivotMask mask, int offset);

}  // namespace mucrasp
