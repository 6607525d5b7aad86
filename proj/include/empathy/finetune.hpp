#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "empathy/corpus.hpp"
#include "empathy/llm/gateway.hpp"
#include "empathy/llm/prompts.hpp"
#include "empathy/llm/transport.hpp"

namespace empathy::finetune {

/// Newline-delimited chat-format examples, one per training triplet.
struct TrainingFile {
  std::string content;
  std::string fingerprint;  ///< SHA-256 of content
  std::size_t examples = 0;
};

/// system = naive instruction, user = labelled dialogue, assistant = "1".."3".
TrainingFile export_training_file(const BalancedSplit& split);
TrainingFile export_training_file(std::span<const DialogueTriplet> train);

struct ImportedExample {
  llm::DialogueText dialogue;
  EmpathyLabel label;
};

/// Parses an exported file back into (dialogue, label) pairs. Throws DataError
/// on malformed lines.
std::vector<ImportedExample> import_training_file(std::string_view content);

struct FinetuneJobSpec {
  std::string base_model_id = "gpt-4o-mini-2024-07-18";
  int n_epochs = 4;
  double learning_rate_multiplier = 0.5;
  std::string training_file_fingerprint;

  /// Throws PreconditionError for n_epochs < 1 or a non-positive multiplier.
  void validate() const;
  /// "e4-lrm0.50"
  std::string label() const;
  nlohmann::ordered_json to_json() const;
  static FinetuneJobSpec from_json(const nlohmann::json& doc);
};

struct GridPoint {
  int n_epochs;
  double learning_rate_multiplier;
};

/// (3, 1.80), (4, 0.25), (4, 0.50), (4, 0.75), (4, 1.00)
std::vector<GridPoint> default_grid();

enum class JobState { queued, running, succeeded, failed };
std::string_view to_string(JobState state);
bool is_terminal(JobState state);

struct JobStatus {
  std::string job_id;
  JobState state = JobState::queued;
  std::optional<std::string> fine_tuned_model_id;  ///< set iff succeeded
  std::string message;                             ///< provider error text for failed jobs

  bool operator==(const JobStatus&) const = default;
};

class FinetuneProvider {
public:
  virtual ~FinetuneProvider() = default;
  /// Registers the training file; returns the provider's file id.
  virtual std::string upload(const TrainingFile& file) = 0;
  virtual std::string create_job(const FinetuneJobSpec& spec, const std::string& file_id) = 0;
  /// Throws PreconditionError for an unknown job id.
  virtual JobStatus retrieve(const std::string& job_id) = 0;
};

/// Deterministic provider: a job reports queued on the first poll, running on
/// the following ones and finishes on poll `polls_to_finish`. Jobs whose
/// label() is listed in `failing` end in the failed state.
class MockFinetuneProvider final : public FinetuneProvider {
public:
  explicit MockFinetuneProvider(int polls_to_finish = 3, std::set<std::string> failing = {});

  std::string upload(const TrainingFile& file) override;
  std::string create_job(const FinetuneJobSpec& spec, const std::string& file_id) override;
  JobStatus retrieve(const std::string& job_id) override;

  /// The model id a successful job with this spec reports.
  static std::string model_id_for(const FinetuneJobSpec& spec);

private:
  struct Job {
    FinetuneJobSpec spec;
    int polls = 0;
  };
  std::mutex mutex_;
  int polls_to_finish_;
  std::set<std::string> failing_;
  std::set<std::string> files_;
  std::map<std::string, Job> jobs_;
};

/// OpenAI-compatible /files and /fine_tuning/jobs client.
class HttpFinetuneProvider final : public FinetuneProvider {
public:
  explicit HttpFinetuneProvider(llm::HttpEndpoint endpoint);

  std::string upload(const TrainingFile& file) override;
  std::string create_job(const FinetuneJobSpec& spec, const std::string& file_id) override;
  JobStatus retrieve(const std::string& job_id) override;

private:
  llm::HttpEndpoint endpoint_;
  llm::BaseUrl url_;
};

/// Maps a provider job object to a JobStatus.
JobStatus parse_job_object(const nlohmann::json& job);

struct PollOptions {
  int max_rounds = 1000;
  std::chrono::milliseconds interval{30000};
  std::chrono::milliseconds jitter{2000};
  std::uint64_t jitter_seed = 0;
};

/// Submits jobs and tracks their status. Once a job reaches a terminal state
/// its status is frozen and never re-fetched.
class JobTracker {
public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit JobTracker(std::shared_ptr<FinetuneProvider> provider);

  std::string upload(const TrainingFile& file) { return provider_->upload(file); }

  /// Validates the spec, then creates the job. The spec must reference the
  /// fingerprint of the uploaded file.
  std::string submit(const FinetuneJobSpec& spec, const std::string& file_id);
  JobStatus poll(const std::string& job_id);
  /// Polls every non-terminal job once per round until all are terminal or
  /// the round cap is hit.
  std::vector<JobStatus> wait_all(const std::vector<std::string>& job_ids, const PollOptions& options = {});

  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

private:
  std::shared_ptr<FinetuneProvider> provider_;
  std::mutex mutex_;
  std::set<std::string> known_;
  std::map<std::string, JobStatus> terminal_;
  Sleeper sleeper_;
};

struct FinetuneEvaluation {
  std::string model_id;
  double accuracy = 0.0;
  std::vector<std::optional<EmpathyLabel>> predictions;
};

/// Scores the test records with the naive prompt through the gateway.
FinetuneEvaluation evaluate_finetuned(const std::string& model_id, std::span<const DialogueTriplet> test,
                                      llm::Gateway& gateway, const llm::PromptOptions& prompt = {});

struct LedgerEntry {
  FinetuneJobSpec spec;
  std::string job_id;
  JobStatus status;
  std::optional<double> accuracy;
  std::vector<std::optional<EmpathyLabel>> predictions;  ///< aligned with the test records
};

struct GridResult {
  std::string training_file_fingerprint;
  std::vector<LedgerEntry> entries;
};

/// Upload, submit every grid point, wait, then evaluate every succeeded model.
GridResult run_grid(const TrainingFile& file, const std::vector<GridPoint>& grid, const std::string& base_model_id,
                    JobTracker& tracker, std::span<const DialogueTriplet> test, llm::Gateway& gateway,
                    const PollOptions& poll = {});

nlohmann::ordered_json ledger_to_json(const GridResult& result);
GridResult ledger_from_json(const nlohmann::json& doc);
void save_ledger(const std::filesystem::path& path, const GridResult& result);
GridResult load_ledger(const std::filesystem::path& path);

}  // namespace empathy::finetune
