#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace empathy::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);

/// Lowercase, trim, and collapse internal whitespace runs to one space.
std::string canonical_name(std::string_view s);

/// CRLF -> LF, strip trailing whitespace on each line, trim the whole text.
std::string normalize_whitespace(std::string_view s);

/// Non-overlapping occurrences of needle in haystack.
std::size_t count_occurrences(std::string_view haystack, std::string_view needle);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Column-safe identifier: spaces and hyphens become underscores.
std::string column_name(std::string_view s);

/// printf("%.4f") without locale surprises.
std::string fixed(double value, int decimals);

}  // namespace empathy::text
