#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "empathy/corpus.hpp"
#include "empathy/features.hpp"
#include "empathy/finetune.hpp"
#include "empathy/llm/gateway.hpp"
#include "empathy/models/model.hpp"
#include "empathy/registry.hpp"

namespace empathy::bench {

struct ClassifierEntry {
  models::ClassifierFamily family;
  nlohmann::json hyperparameters = nlohmann::json::object();
};

struct RfeSettings {
  bool enabled = true;
  std::vector<models::ClassifierFamily> families;  ///< defaults to every configured classifier
  std::optional<std::size_t> selected_k;           ///< default: each curve's best k
  int permutation_repeats = 5;
};

struct FinetuneSettings {
  bool enabled = false;
  std::string provider = "mock";  ///< "mock" or "live"
  std::string base_model_id = "gpt-4o-mini-2024-07-18";
  std::vector<finetune::GridPoint> grid = finetune::default_grid();
  int mock_polls = 3;
  std::vector<std::string> mock_failing;  ///< spec labels, e.g. "e4-lrm0.25"
  int poll_interval_ms = 30000;
  int poll_jitter_ms = 2000;
};

/// Declarative description of one run. Relative paths are resolved against
/// the directory of the config file.
struct ExperimentConfig {
  std::filesystem::path base_dir;

  std::string dataset;
  std::optional<std::string> miti_vocabulary;
  std::uint64_t seed = 42;
  double split_ratio = 0.8;

  llm::BackendConfig backend;
  std::string cache_dir;    ///< as written; resolved into backend.cache_dir
  std::string fixture_dir;  ///< as written; resolved into backend.fixture_dir

  std::map<RegistryVersion, std::string> registries;
  RegistryVersion feature_registry = RegistryVersion::V2;

  std::vector<std::string> llm_models{"gpt-4o-mini"};
  std::vector<std::string> llm_prompts{"naive"};  ///< "naive" or "subfactor_<version>"
  std::string subfactor_model = "gpt-4o";
  EmbeddingOptions embedding;

  std::vector<FeatureFamily> feature_families{FeatureFamily::embedding, FeatureFamily::miti,
                                              FeatureFamily::subfactor, FeatureFamily::combined};
  std::vector<ClassifierEntry> classifiers;
  bool standardize = true;
  RfeSettings rfe;
  FinetuneSettings finetune;

  std::string output_dir = "out";
  bool plot = false;

  /// Validates every field; throws PreconditionError naming the offending key.
  static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Canonical serialization stored in the run manifest. Output and cache
  /// locations are left out so that relocating a run does not change it.
  nlohmann::ordered_json to_json() const;

  std::filesystem::path resolve(const std::string& path) const;
  std::filesystem::path output_root() const;

  bool needs_embeddings() const;
  bool needs_subfactors() const;
};

/// Seed for a named stage: first 8 bytes of SHA-256("<stage>:<seed>").
std::uint64_t stage_seed(std::uint64_t global_seed, std::string_view stage);

/// Accuracy as printed in every report, to four decimals.
std::string accuracy_text(double accuracy);

struct ConfusionMatrix {
  std::array<std::array<std::size_t, 3>, 3> counts{};  ///< [truth][prediction]
  std::size_t failures = 0;                            ///< predictions that failed to parse

  static ConfusionMatrix from(std::span<const std::optional<EmpathyLabel>> prediction,
                              std::span<const EmpathyLabel> truth);
  std::size_t total() const;
  std::size_t trace() const;
  double accuracy() const;
  nlohmann::ordered_json to_json() const;
};

/// Stage failures carry the stage name; outputs written before the failure stay on disk.
class StageError : public std::runtime_error {
public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

private:
  std::string stage_;
};

struct EvaluationReport {
  nlohmann::ordered_json manifest;
  nlohmann::ordered_json dataset;
  nlohmann::ordered_json llm_baselines;  ///< null when not run
  nlohmann::ordered_json classifiers;
  nlohmann::ordered_json rfe;
  nlohmann::ordered_json importance;
  nlohmann::ordered_json finetune;
  nlohmann::ordered_json summary;

  nlohmann::ordered_json to_json() const;
};

/// Executes pipeline stages against an output directory. Every stage persists
/// its result under <out>/results so stages can be re-run individually.
class Runner {
public:
  explicit Runner(ExperimentConfig config, std::shared_ptr<llm::Transport> transport = nullptr,
                  std::shared_ptr<finetune::FinetuneProvider> provider = nullptr);

  void ingest();
  void balance();
  void split();
  void score_llm();
  void embed();
  /// Runs subfactor elicitation and writes a registry under <out>/registries.
  SubfactorRegistry elicit_subfactors(int rounds, std::size_t sample_size, RegistryVersion version);
  void score_subfactors();
  void train();
  void rfe();
  void finetune();
  EvaluationReport report();

  /// Every configured stage in order, then the report.
  EvaluationReport run_all();

  const ExperimentConfig& config() const { return config_; }
  std::filesystem::path out_dir() const { return out_; }
  /// Gateway counters so far, if a gateway was created.
  std::optional<llm::GatewayStats> gateway_stats() const;

private:
  llm::Gateway& gateway();
  const MitiVocabulary& vocabulary();
  BalancedSplit load_split_checked();
  SubfactorRegistry registry(RegistryVersion version);
  std::pair<FeatureMatrix, FeatureMatrix> matrices(FeatureFamily family, const BalancedSplit& split,
                                                   nlohmann::ordered_json& notes);
  models::ClassifierSpec spec_for(FeatureFamily family, const ClassifierEntry& entry) const;
  void write_result(const std::string& name, const nlohmann::ordered_json& doc);
  std::optional<nlohmann::json> read_result(const std::string& name) const;

  ExperimentConfig config_;
  std::filesystem::path out_;
  std::shared_ptr<llm::Transport> transport_;
  std::shared_ptr<finetune::FinetuneProvider> provider_;
  std::unique_ptr<llm::Gateway> gateway_;
  std::optional<MitiVocabulary> vocabulary_;
};

EvaluationReport run_experiment(const ExperimentConfig& config);

struct EmitOptions {
  bool plot = false;
};

/// Writes report.json, accuracy tables, sweep curves, importance table,
/// confusion matrices and per-record predictions (plus SVG plots with
/// plot=true). Returns the file names written, in order.
std::vector<std::string> emit_report(const EvaluationReport& report, const std::filesystem::path& dir,
                                     const EmitOptions& options = {});

}  // namespace empathy::bench
