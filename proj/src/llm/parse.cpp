#include "empathy/llm/parse.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>

#include "empathy/text.hpp"

namespace empathy::llm {

using nlohmann::json;

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::optional<EmpathyLabel> try_parse_empathy_score(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_digit(s[i])) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < s.size() && is_digit(s[i])) ++i;
    const std::size_t end = i;

    bool standalone = true;
    if (start > 0) {
      const char prev = s[start - 1];
      if (is_word_char(prev)) standalone = false;
      // "0.5" style fraction tail
      if (prev == '.' && start >= 2 && is_digit(s[start - 2])) standalone = false;
      // a sign, unless it is a range dash like "1-3"
      if (prev == '-' && (start < 2 || !is_word_char(s[start - 2]))) standalone = false;
    }
    if (end < s.size()) {
      const char next = s[end];
      if (is_word_char(next)) standalone = false;
      if ((next == '.' || next == ',') && end + 1 < s.size() && is_digit(s[end + 1])) {
        standalone = false;
        // skip the fractional part so it is not read as its own token
        i = end + 1;
        while (i < s.size() && is_digit(s[i])) ++i;
      }
    }
    if (!standalone) continue;

    const auto digits = s.substr(start, end - start);
    if (digits.size() > 3) continue;
    const int value = std::stoi(std::string(digits));
    if (value >= EmpathyLabel::kMin && value <= EmpathyLabel::kMax) return EmpathyLabel::from_int(value);
  }
  return std::nullopt;
}

EmpathyLabel parse_empathy_score(std::string_view text) {
  if (auto label = try_parse_empathy_score(text)) return *label;
  std::string excerpt(text.substr(0, 80));
  throw ParseError("no empathy score in {1,2,3} found in model output: '" + excerpt + "'");
}

std::optional<std::string_view> find_json_object(std::string_view s) {
  for (std::size_t start = s.find('{'); start != std::string_view::npos; start = s.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < s.size(); ++i) {
      const char c = s[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          auto candidate = s.substr(start, i - start + 1);
          if (json::accept(candidate)) return candidate;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

namespace {

std::string key_form(std::string_view key) {
  std::string k(key);
  for (char& c : k) {
    if (c == '_') c = ' ';
  }
  return text::canonical_name(k);
}

int integer_value(const json& v, const std::string& name) {
  if (v.is_number_integer()) {
    const auto x = v.get<long long>();
    return static_cast<int>(std::clamp<long long>(x, -1000000, 1000000));
  }
  if (v.is_number_float()) {
    const double x = v.get<double>();
    if (std::isfinite(x) && x == std::floor(x) && std::abs(x) < 1e6) return static_cast<int>(x);
    throw ParseError("non-integer value for subfactor '" + name + "': " + v.dump());
  }
  if (v.is_string()) {
    const auto s = text::trim(v.get<std::string>());
    std::size_t pos = 0;
    int x = 0;
    try {
      x = std::stoi(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (!s.empty() && pos == s.size()) return x;
  }
  throw ParseError("non-integer value for subfactor '" + name + "': " + v.dump());
}

}  // namespace

SubfactorParse parse_subfactor_scores(std::string_view text_in, const SubfactorRegistry& registry) {
  const auto block = find_json_object(text_in);
  if (!block) throw ParseError("no JSON object found in subfactor scoring output");
  json obj = json::parse(*block);

  std::map<std::string, const json*> by_key;
  auto index_keys = [&](const json& o) {
    by_key.clear();
    for (auto it = o.begin(); it != o.end(); ++it) by_key.emplace(key_form(it.key()), &it.value());
  };
  index_keys(obj);

  const auto& names = registry.subfactors();
  auto matches_any = [&] {
    for (const auto& sf : names) {
      if (by_key.contains(key_form(sf.name))) return true;
    }
    return false;
  };
  if (!matches_any() && obj.size() == 1 && obj.begin().value().is_object()) {
    obj = json(obj.begin().value());
    index_keys(obj);
  }

  SubfactorParse out;
  out.scores.values.reserve(names.size());
  for (const auto& sf : names) {
    const auto it = by_key.find(key_form(sf.name));
    if (it == by_key.end()) throw ParseError("subfactor scoring output is missing '" + sf.name + "'");
    int v = integer_value(*it->second, sf.name);
    if (v < SubfactorVector::kMinScore || v > SubfactorVector::kMaxScore) {
      const int clamped = std::clamp(v, SubfactorVector::kMinScore, SubfactorVector::kMaxScore);
      out.warnings.push_back("subfactor '" + sf.name + "' value " + std::to_string(v) + " clamped to " +
                             std::to_string(clamped));
      v = clamped;
    }
    out.scores.values.push_back(v);
  }
  return out;
}

}  // namespace empathy::llm
