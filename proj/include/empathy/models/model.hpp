#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "empathy/common.hpp"
#include "empathy/features.hpp"
#include "empathy/matrix.hpp"

namespace empathy::models {

enum class ClassifierFamily { LR, SVC, DT, RF, MLP };

inline constexpr std::array<ClassifierFamily, 5> kAllFamilies = {
    ClassifierFamily::LR, ClassifierFamily::SVC, ClassifierFamily::DT, ClassifierFamily::RF, ClassifierFamily::MLP};

std::string_view to_string(ClassifierFamily family);
ClassifierFamily parse_family(std::string_view text);

/// Frozen defaults:
///   LR  - multinomial, L2 with C=1, L-BFGS up to 1000 iterations
///   SVC - RBF kernel, C=1, gamma="scale", one-vs-one voting
///   DT  - Gini, unlimited depth
///   RF  - 100 bootstrap trees, sqrt(n_features) candidates per split
///   MLP - one ReLU hidden layer of 100 units, Adam, 200 epochs
nlohmann::json default_hyperparameters(ClassifierFamily family);

struct ClassifierSpec {
  ClassifierFamily family = ClassifierFamily::LR;
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::uint64_t seed = 0;

  /// Defaults for the family overlaid with the given values; unknown names or
  /// out-of-range values throw PreconditionError.
  static ClassifierSpec make(ClassifierFamily family, const nlohmann::json& overrides = nlohmann::json::object(),
                             std::uint64_t seed = 0);

  /// Display name, e.g. "LR".
  std::string name() const { return std::string(to_string(family)); }
  nlohmann::ordered_json to_json() const;
  static ClassifierSpec from_json(const nlohmann::json& doc);
};

void validate_hyperparameters(ClassifierFamily family, const nlohmann::json& hyperparameters);

/// Fitted parameters of one classifier family.
class Model {
public:
  virtual ~Model() = default;

  /// rows x 3 per-class scores (probabilities or votes); higher is better.
  virtual Matrix class_scores(const Matrix& x) const = 0;

  /// Per-feature importance the family exposes natively, if any.
  virtual std::optional<std::vector<double>> intrinsic_importance() const = 0;

  virtual nlohmann::json parameters() const = 0;
};

struct TrainedModel {
  ClassifierSpec spec;
  std::shared_ptr<const Model> model;
  std::vector<std::string> schema;
  std::string training_fingerprint;
  std::vector<std::string> warnings;

  /// Hash of spec, schema, training fingerprint and fitted parameters.
  std::string fingerprint() const;
  nlohmann::ordered_json to_json() const;
  static TrainedModel from_json(const nlohmann::json& doc);
};

struct PredictionBatch {
  std::vector<std::string> record_ids;
  std::vector<std::optional<EmpathyLabel>> labels;  ///< nullopt marks a scoring failure
  Matrix scores;                                    ///< empty for non-classifier predictions
};

/// Fits the spec on X (labels taken from X.labels). Throws PreconditionError
/// when a class is missing or X is empty; DataError on misalignment or
/// non-finite features.
TrainedModel train(const ClassifierSpec& spec, const FeatureMatrix& x);
TrainedModel train(const ClassifierSpec& spec, const FeatureMatrix& x, std::span<const EmpathyLabel> y);

/// One label per row; ties in class scores go to the lowest label.
PredictionBatch predict(const TrainedModel& model, const FeatureMatrix& x);

/// Argmax with ties to the lowest index.
int argmax_lowest(std::span<const double> scores);

/// Exact-match proportion; failures count as mismatches. Empty input gives 0.
double accuracy(const PredictionBatch& prediction, std::span<const EmpathyLabel> truth);
double accuracy(std::span<const std::optional<EmpathyLabel>> prediction, std::span<const EmpathyLabel> truth);

enum class ImportanceMethod { intrinsic, permutation };

struct ImportanceOptions {
  int repeats = 5;
  std::uint64_t seed = 0;
};

/// intrinsic: LR mean |coefficient| across classes, linear SVC mean |w| across
/// pairs, DT/RF normalized impurity decrease. permutation: mean accuracy drop
/// over seeded column shuffles. Intrinsic on RBF SVC or MLP throws
/// PreconditionError.
std::vector<double> importance(const TrainedModel& model, const FeatureMatrix& x, std::span<const EmpathyLabel> y,
                               ImportanceMethod method, const ImportanceOptions& options = {});

bool supports_intrinsic(const ClassifierSpec& spec);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace empathy::models
