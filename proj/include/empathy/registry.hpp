#pragma once

#include <array>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

namespace empathy {

enum class EmpathyDimension { cognitive, affective, compassionate };

inline constexpr std::array<EmpathyDimension, 3> kDimensions = {
    EmpathyDimension::cognitive, EmpathyDimension::affective, EmpathyDimension::compassionate};

std::string_view to_string(EmpathyDimension dimension);
/// Header used in prompts, e.g. "Affective (Emotional) Empathy".
std::string_view display_name(EmpathyDimension dimension);
EmpathyDimension parse_dimension(std::string_view text);

struct SubfactorDefinition {
  std::string name;
  std::string definition;
  EmpathyDimension dimension = EmpathyDimension::cognitive;

  bool operator==(const SubfactorDefinition&) const = default;
};

enum class RegistryVersion { V1, V2, custom };

std::string_view to_string(RegistryVersion version);
RegistryVersion parse_registry_version(std::string_view text);

/// Versioned set of named empathy subfactors grouped under the three
/// dimensions. Every dimension holds the same number of subfactors; the
/// standard registries hold five each. Ordering is dimension-major, then
/// declared order within a dimension.
class SubfactorRegistry {
public:
  static constexpr std::size_t kPerDimension = 5;
  static constexpr std::size_t kStandardSize = 15;

  SubfactorRegistry(RegistryVersion version, std::vector<SubfactorDefinition> subfactors,
                    std::string provenance = {});

  RegistryVersion version() const { return version_; }
  const std::string& provenance() const { return provenance_; }
  const std::vector<SubfactorDefinition>& subfactors() const { return subfactors_; }
  std::size_t size() const { return subfactors_.size(); }
  std::size_t per_dimension() const { return subfactors_.size() / kDimensions.size(); }

  /// Throws PreconditionError unless the registry has 15 entries, 5 per dimension.
  void require_standard() const;

  /// Lowercase feature-column names, e.g. "perspective_taking".
  std::vector<std::string> column_names() const;

  nlohmann::ordered_json to_json() const;
  static SubfactorRegistry from_json(const nlohmann::json& doc);

  /// SHA-256 of the canonical JSON serialization.
  std::string content_hash() const;

  bool operator==(const SubfactorRegistry& other) const {
    return version_ == other.version_ && subfactors_ == other.subfactors_;
  }

private:
  RegistryVersion version_;
  std::vector<SubfactorDefinition> subfactors_;
  std::string provenance_;
};

/// Loads and validates a registry file (5 per dimension, unique names).
/// Throws DataError when the file's version differs from `expected`
/// (pass RegistryVersion::custom to accept any).
SubfactorRegistry load_registry(RegistryVersion expected, const std::filesystem::path& path);
void save_registry(const SubfactorRegistry& registry, const std::filesystem::path& path);

/// Per-record subfactor scores in registry order, each in [1,10].
struct SubfactorVector {
  std::vector<int> values;

  static constexpr int kMinScore = 1;
  static constexpr int kMaxScore = 10;

  bool operator==(const SubfactorVector&) const = default;
};

}  // namespace empathy
