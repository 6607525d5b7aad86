#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "empathy/common.hpp"
#include "empathy/registry.hpp"

namespace empathy::llm {

/// Model output that does not contain what the parser needs.
class ParseError : public DataError {
public:
  using DataError::DataError;
};

/// Returns the first standalone integer token whose value is 1, 2 or 3.
/// Standalone means not glued to letters, digits or underscores, not part of
/// a decimal ("2.5") and not negative ("-2"). Throws ParseError if none.
EmpathyLabel parse_empathy_score(std::string_view text);
std::optional<EmpathyLabel> try_parse_empathy_score(std::string_view text);

struct SubfactorParse {
  SubfactorVector scores;
  std::vector<std::string> warnings;
};

/// Extracts the first JSON object in the text (code fences and prose around
/// it are ignored; a single wrapping object such as {"scores": {...}} is
/// unwrapped). Keys match registry names case-insensitively after trimming,
/// with underscores treated as spaces. Values must be integers (numeric
/// strings accepted) and are clamped to [1,10] with a warning. Output is in
/// registry order. Throws ParseError on a missing key, a non-integer value or
/// an unparseable structure.
SubfactorParse parse_subfactor_scores(std::string_view text, const SubfactorRegistry& registry);

/// Locates the first balanced {...} block, honouring JSON string escapes.
std::optional<std::string_view> find_json_object(std::string_view text);

}  // namespace empathy::llm
