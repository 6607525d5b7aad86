#include "empathy/text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "empathy/common.hpp"

namespace empathy {

std::string_view to_string(ResponseSource source) {
  switch (source) {
    case ResponseSource::human: return "human";
    case ResponseSource::llm: return "llm";
    case ResponseSource::llm_empathy_prompted: return "llm_empathy_prompted";
  }
  return "human";
}

ResponseSource parse_response_source(std::string_view raw) {
  const std::string s = text::canonical_name(raw);
  if (s == "human") return ResponseSource::human;
  if (s == "llm" || s == "chatgpt") return ResponseSource::llm;
  if (s == "llm_empathy_prompted" || s == "chatgpt_empathy_prompted" || s == "chatgpt-empathy-prompted")
    return ResponseSource::llm_empathy_prompted;
  throw DataError("unknown response source: '" + std::string(raw) + "'");
}

namespace text {

namespace {
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string to_upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::string canonical_name(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::string normalize_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::string line;
  auto flush = [&](bool newline) {
    std::size_t e = line.size();
    while (e > 0 && is_space(line[e - 1])) --e;
    out.append(line, 0, e);
    if (newline) out.push_back('\n');
    line.clear();
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\r') {
      if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
      flush(true);
    } else if (s[i] == '\n') {
      flush(true);
    } else {
      line.push_back(s[i]);
    }
  }
  flush(false);
  return trim(out);
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t count = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      parts.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

std::string column_name(std::string_view s) {
  std::string out = trim(s);
  for (char& c : out) {
    if (is_space(c) || c == '-') c = '_';
  }
  return out;
}

std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

}  // namespace text
}  // namespace empathy
