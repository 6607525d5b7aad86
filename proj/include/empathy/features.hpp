#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "empathy/corpus.hpp"
#include "empathy/llm/gateway.hpp"
#include "empathy/matrix.hpp"
#include "empathy/miti.hpp"
#include "empathy/registry.hpp"

namespace empathy {

enum class FeatureFamily { embedding, miti, subfactor, combined };

std::string_view to_string(FeatureFamily family);
FeatureFamily parse_feature_family(std::string_view text);

/// Multi-hot presence of each vocabulary code.
struct MitiVector {
  std::vector<int> values;
  bool operator==(const MitiVector&) const = default;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::string model_id;
};

/// Numeric rows aligned with record ids and labels under a named column schema.
struct FeatureMatrix {
  Matrix values;
  std::vector<std::string> schema;
  std::vector<std::string> record_ids;
  std::vector<EmpathyLabel> labels;
  /// Fingerprint of the StandardizationStats already applied, if any.
  std::optional<std::string> standardized_with;

  std::size_t rows() const { return values.rows; }
  std::size_t cols() const { return values.cols; }

  /// Throws DataError on misaligned sizes, duplicate ids or non-finite values.
  void validate() const;

  FeatureMatrix select_columns(std::span<const std::size_t> columns) const;
  /// Column indices of `names` in this schema; throws on an unknown name.
  std::vector<std::size_t> column_indices(std::span<const std::string> names) const;
};

MitiVector encode_miti(std::span<const std::string> annotation, const MitiVocabulary& vocabulary);

struct EmbeddingOptions {
  std::string model_id = "text-embedding-3-small";
  std::size_t dimension = 1536;
  bool response_only = false;
};

EmbeddingVector embed_record(const DialogueTriplet& triplet, llm::Gateway& gateway,
                             const EmbeddingOptions& options = {});
/// Embeds every record through the gateway's bounded concurrency.
std::map<std::string, EmbeddingVector> embed_records(std::span<const DialogueTriplet> records, llm::Gateway& gateway,
                                                     const EmbeddingOptions& options = {});

/// MITI columns first, then subfactor columns.
std::vector<double> concat_features(const MitiVector& miti, const SubfactorVector& subfactors);

/// Per-record feature sources consulted by assemble_matrix.
struct FeatureSources {
  const MitiVocabulary* vocabulary = &MitiVocabulary::standard();
  const SubfactorRegistry* registry = nullptr;
  std::map<std::string, SubfactorVector> subfactors;
  std::map<std::string, EmbeddingVector> embeddings;
};

std::vector<std::string> schema_for(FeatureFamily family, const FeatureSources& sources);

/// Builds the matrix for one feature family. Throws DataError listing every
/// record that lacks the required feature, or on duplicate record ids.
FeatureMatrix assemble_matrix(std::span<const DialogueTriplet> records, FeatureFamily family,
                              const FeatureSources& sources);

struct StandardizationStats {
  std::vector<std::string> schema;
  std::vector<double> means;
  std::vector<double> stds;  ///< population standard deviation
  std::vector<bool> constant;

  std::string fingerprint() const;
};

StandardizationStats fit_standardization(const FeatureMatrix& matrix);

/// z-scores every non-constant column with the given stats (constant columns
/// pass through). With no stats, fits them on `matrix` first. A matrix that
/// was already transformed with the same stats is returned unchanged.
std::pair<FeatureMatrix, StandardizationStats> standardize(
    const FeatureMatrix& matrix, const std::optional<StandardizationStats>& stats = std::nullopt);

// Feature store: CSV with header "id,label,<schema...>" and round-trip exact values.
void write_feature_store(const std::filesystem::path& path, const FeatureMatrix& matrix);
FeatureMatrix read_feature_store(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace empathy
