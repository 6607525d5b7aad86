#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace empathy::csv {

using Row = std::vector<std::string>;

/// RFC 4180 reader: quoted fields may contain the separator, doubled quotes
/// and newlines. A UTF-8 BOM at the start is skipped.
std::vector<Row> parse(std::string_view content, char sep = ',');

std::vector<Row> read_file(const std::filesystem::path& path, char sep = ',');

/// Quotes a field only when it needs it.
std::string escape(std::string_view field, char sep = ',');

void write_row(std::ostream& out, const Row& row, char sep = ',');

}  // namespace empathy::csv
