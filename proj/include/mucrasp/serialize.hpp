// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <iosfwd>
#include <string>

namespace mucrasp {

// Writes via a temp file in the same directory, then renames over the target,
// so readers never observe a partial file.
void atomic_write(const std::string& path,
                  const std::function<void(std::ostream&)>& writer);

void atomic_write_text(const std::string& path, const std::string& text);

std::string read_text_file(const std::string& path);

// Every JSON document this tool emits carries {"schema_version": 1, "kind": ...}.
inline constexpr int kSchemaVersion = 1;

}  // namespace mucrasp
