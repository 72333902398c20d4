#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ncq::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with_icase(std::string_view s, std::string_view prefix);
bool equals_icase(std::string_view a, std::string_view b);

// Splits on '\n'; a trailing '\r' on each line is dropped.
std::vector<std::string> split_lines(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Replaces every occurrence of `from` (non-empty) with `to`.
std::string replace_all(std::string_view s, std::string_view from, std::string_view to);

// Lowercase word tokens ([A-Za-z']+), e.g. "Can't stop" -> {"can't", "stop"}.
std::vector<std::string> words(std::string_view s);

std::string read_file(const std::string& path);
// Writes to `path.tmp` then renames over `path`.
void write_file_atomic(const std::string& path, std::string_view content);

std::string sha256_hex(std::string_view data);

}  // namespace ncq::text
