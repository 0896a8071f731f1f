// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace mucrasp {

struct MergedReport {
  std::string json_text;
  std::string csv_text;
};

// Merges plan / eval / compare / ablate JSON documents into one table keyed
// by (method, S). Documents are processed in order; a later document may fill
// columns an earlier one left empty, but two different values for the same
// column of the same row conflict. Any schema-version mismatch is an error.
MergedReport merge_reports(const std::vector<std::string>& documents);

}  // namespace mucrasp
