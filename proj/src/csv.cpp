#include "empathy/csv.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "empathy/common.hpp"

namespace empathy::csv {

std::vector<Row> parse(std::string_view content, char sep) {
  if (content.starts_with("\xEF\xBB\xBF")) content.remove_prefix(3);

  std::vector<Row> rows;
  Row row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };

  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == sep) {
      end_field();
    } else if (c == '\r') {
      // swallowed; the following '\n' ends the row
    } else if (c == '\n') {
      ++line;
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw DataError("unterminated quoted field near line " + std::to_string(line));
  if (field_started || !row.empty()) end_row();
  return rows;
}

std::vector<Row> read_file(const std::filesystem::path& path, char sep) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), sep);
}

std::string escape(std::string_view field, char sep) {
  const bool needs_quotes = field.find_first_of(std::string{sep, '"', '\n', '\r'}) != std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const Row& row, char sep) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out.put(sep);
    out << escape(row[i], sep);
  }
  out.put('\n');
}

}  // namespace empathy::csv
