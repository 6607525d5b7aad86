#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "empathy/features.hpp"
#include "empathy/models/model.hpp"

namespace empathy::selector {

struct RfeRanking {
  std::vector<std::string> schema;
  std::vector<int> ranks;             ///< 1 = eliminated last
  std::vector<double> importance;     ///< scores from the first (all-feature) round
  std::vector<std::string> elimination_order;
  models::ClassifierSpec spec;
  models::ImportanceMethod method = models::ImportanceMethod::intrinsic;
  std::uint64_t seed = 0;
};

struct RfeOptions {
  int permutation_repeats = 5;
};

/// Recursive feature elimination, one feature per round. Ties in the score
/// eliminate the column with the higher schema index.
RfeRanking rfe_rank(const models::ClassifierSpec& spec, const FeatureMatrix& x, const RfeOptions& options = {});

/// The k best-ranked feature names, in schema order.
std::vector<std::string> select_k(const RfeRanking& ranking, std::size_t k);

struct SweepPoint {
  std::size_t k = 0;
  double accuracy = 0.0;
  std::vector<std::string> features;
};

struct SweepCurve {
  std::string model;
  std::vector<SweepPoint> points;  ///< k = 1..n
  models::ClassifierSpec spec;
  std::string split_fingerprint;
  std::size_t best_k = 0;          ///< ties go to the smaller k
  double best_accuracy = 0.0;
};

/// Retrains from the spec for every k and scores on the test matrix.
SweepCurve sweep(const models::ClassifierSpec& spec, const RfeRanking& ranking, const FeatureMatrix& train,
                 const FeatureMatrix& test, const std::string& split_fingerprint = "");

/// rfe_rank on the training matrix followed by sweep.
SweepCurve sweep(const models::ClassifierSpec& spec, const FeatureMatrix& train, const FeatureMatrix& test,
                 const std::string& split_fingerprint = "", const RfeOptions& options = {});

struct ImportanceEntry {
  std::string model;
  int rank = 0;
  double importance = 0.0;
  bool selected = false;
};

struct ImportanceRow {
  std::string feature;
  std::vector<ImportanceEntry> entries;  ///< one per ranking, in input order
};

struct ImportanceTable {
  std::vector<ImportanceRow> rows;  ///< schema order
};

struct ModelSelection {
  std::string model;
  RfeRanking ranking;
  std::size_t k = 0;
};

/// Throws PreconditionError if the rankings disagree on the schema.
ImportanceTable importance_report(const std::vector<ModelSelection>& selections);

void write_importance_csv(const std::filesystem::path& path, const ImportanceTable& table);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepCurve>& curves);

}  // namespace empathy::selector
