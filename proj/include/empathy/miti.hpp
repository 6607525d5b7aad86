#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace empathy {

/// Ordered list of the MITI behaviour codes a response can be annotated with.
/// Lookups are case-insensitive and whitespace-tolerant; the order fixes the
/// column layout of MITI feature vectors.
class MitiVocabulary {
public:
  static constexpr std::size_t kStandardSize = 15;

  explicit MitiVocabulary(std::vector<std::string> codes);

  /// The 15 codes of the MI-labelled empathetic-dialogue dataset.
  static const MitiVocabulary& standard();

  /// JSON: {"codes": ["Closed Question", ...]}
  static MitiVocabulary load(const std::filesystem::path& path);

  std::size_t size() const { return codes_.size(); }
  const std::vector<std::string>& codes() const { return codes_; }

  std::optional<std::size_t> index_of(std::string_view code) const;
  bool contains(std::string_view code) const { return index_of(code).has_value(); }

  /// Uppercase feature-column names, e.g. "CLOSED_QUESTION".
  std::vector<std::string> column_names() const;

private:
  std::vector<std::string> codes_;
  std::vector<std::string> canonical_;
};

}  // namespace empathy
