#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace empathy {

/// Thrown for invalid input data: malformed records, broken invariants, bad files.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a caller violates an operation precondition.
class PreconditionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown by the LLM gateway and fine-tune providers on transport failures.
class BackendError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Human empathy rating of a response: 1 = bad, 2 = okay, 3 = good.
class EmpathyLabel {
public:
  static constexpr int kMin = 1;
  static constexpr int kMax = 3;
  static constexpr int kNumClasses = 3;

  /// Throws DataError for anything outside {1,2,3}.
  static EmpathyLabel from_int(int value);
  /// Zero-based class index 0..2.
  static EmpathyLabel from_index(int index) { return from_int(index + 1); }

  constexpr int value() const { return value_; }
  constexpr int index() const { return value_ - 1; }

  constexpr auto operator<=>(const EmpathyLabel&) const = default;

private:
  constexpr explicit EmpathyLabel(int v) : value_(v) {}
  int value_;
};

inline EmpathyLabel EmpathyLabel::from_int(int value) {
  if (value < kMin || value > kMax) {
    throw DataError("empathy score out of range {1,2,3}: " + std::to_string(value));
  }
  return EmpathyLabel(value);
}

using ClassCounts = std::array<std::size_t, EmpathyLabel::kNumClasses>;

/// Who produced a response in the source dataset.
enum class ResponseSource { human, llm, llm_empathy_prompted };

std::string_view to_string(ResponseSource source);
/// Accepts the canonical names plus a few aliases used by dataset exports.
ResponseSource parse_response_source(std::string_view text);

}  // namespace empathy
