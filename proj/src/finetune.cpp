#include "empathy/finetune.hpp"

#include <httplib.h>

#include <cmath>
#include <fstream>
#include <thread>

#include "empathy/hash.hpp"
#include "empathy/llm/scoring.hpp"
#include "empathy/rng.hpp"
#include "empathy/text.hpp"

namespace empathy::finetune {

using nlohmann::json;
using nlohmann::ordered_json;

TrainingFile export_training_file(const BalancedSplit& split) { return export_training_file(split.train); }

TrainingFile export_training_file(std::span<const DialogueTriplet> train) {
  TrainingFile out;
  const std::string system = llm::naive_system_text();
  for (const auto& t : train) {
    ordered_json line;
    line["messages"] = ordered_json::array({
        {{"role", "system"}, {"content", system}},
        {{"role", "user"}, {"content", llm::format_dialogue(t)}},
        {{"role", "assistant"}, {"content", std::to_string(t.human_score.value())}},
    });
    out.content += line.dump();
    out.content += '\n';
    ++out.examples;
  }
  out.fingerprint = sha256_hex(out.content);
  return out;
}

std::vector<ImportedExample> import_training_file(std::string_view content) {
  std::vector<ImportedExample> out;
  std::size_t line_no = 0;
  for (const auto& line : text::split(content, '\n')) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto where = "training file line " + std::to_string(line_no);
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    const auto& messages = doc.value("messages", json::array());
    if (messages.size() != 3) throw DataError(where + ": expected 3 messages");
    const auto user = messages[1].value("content", std::string());
    const auto assistant = messages[2].value("content", std::string());
    auto dialogue = llm::parse_dialogue(user);
    if (!dialogue) throw DataError(where + ": user message is not a labelled dialogue");
    if (assistant.size() != 1 || assistant[0] < '1' || assistant[0] > '3') {
      throw DataError(where + ": assistant target must be 1, 2 or 3");
    }
    out.push_back({std::move(*dialogue), EmpathyLabel::from_int(assistant[0] - '0')});
  }
  return out;
}

void FinetuneJobSpec::validate() const {
  if (base_model_id.empty()) throw PreconditionError("fine-tune spec needs a base model id");
  if (n_epochs < 1) throw PreconditionError("n_epochs must be >= 1, got " + std::to_string(n_epochs));
  if (!(learning_rate_multiplier > 0.0) || !std::isfinite(learning_rate_multiplier)) {
    throw PreconditionError("learning_rate_multiplier must be > 0, got " + text::fixed(learning_rate_multiplier, 4));
  }
}

std::string FinetuneJobSpec::label() const {
  return "e" + std::to_string(n_epochs) + "-lrm" + text::fixed(learning_rate_multiplier, 2);
}

ordered_json FinetuneJobSpec::to_json() const {
  ordered_json out;
  out["base_model_id"] = base_model_id;
  out["n_epochs"] = n_epochs;
  out["learning_rate_multiplier"] = learning_rate_multiplier;
  out["training_file_fingerprint"] = training_file_fingerprint;
  return out;
}

FinetuneJobSpec FinetuneJobSpec::from_json(const json& doc) {
  FinetuneJobSpec spec;
  spec.base_model_id = doc.value("base_model_id", spec.base_model_id);
  spec.n_epochs = doc.at("n_epochs").get<int>();
  spec.learning_rate_multiplier = doc.at("learning_rate_multiplier").get<double>();
  spec.training_file_fingerprint = doc.value("training_file_fingerprint", std::string());
  return spec;
}

std::vector<GridPoint> default_grid() { return {{3, 1.80}, {4, 0.25}, {4, 0.50}, {4, 0.75}, {4, 1.00}}; }

std::string_view to_string(JobState state) {
  switch (state) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::succeeded: return "succeeded";
    case JobState::failed: return "failed";
  }
  return "?";
}

bool is_terminal(JobState state) { return state == JobState::succeeded || state == JobState::failed; }

namespace {

JobState parse_state(std::string_view s) {
  for (auto st : {JobState::queued, JobState::running, JobState::succeeded, JobState::failed}) {
    if (s == to_string(st)) return st;
  }
  throw DataError("unknown job state: " + std::string(s));
}

}  // namespace

// --- mock provider -------------------------------------------------------

MockFinetuneProvider::MockFinetuneProvider(int polls_to_finish, std::set<std::string> failing)
    : polls_to_finish_(std::max(1, polls_to_finish)), failing_(std::move(failing)) {}

std::string MockFinetuneProvider::upload(const TrainingFile& file) {
  std::lock_guard lock(mutex_);
  const auto id = "file-mock-" + file.fingerprint.substr(0, 16);
  files_.insert(id);
  return id;
}

std::string MockFinetuneProvider::model_id_for(const FinetuneJobSpec& spec) {
  return "ft:" + spec.base_model_id + ":mock:" + spec.label();
}

std::string MockFinetuneProvider::create_job(const FinetuneJobSpec& spec, const std::string& file_id) {
  spec.validate();
  std::lock_guard lock(mutex_);
  if (!files_.contains(file_id)) throw BackendError("provider rejected job: unknown training file " + file_id);
  const auto id = "ftjob-mock-" + sha256_hex(spec.to_json().dump()).substr(0, 16);
  jobs_.insert_or_assign(id, Job{spec, 0});
  return id;
}

JobStatus MockFinetuneProvider::retrieve(const std::string& job_id) {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw PreconditionError("unknown job id: " + job_id);
  auto& job = it->second;
  ++job.polls;
  JobStatus status;
  status.job_id = job_id;
  if (job.polls >= polls_to_finish_) {
    if (failing_.contains(job.spec.label())) {
      status.state = JobState::failed;
      status.message = "mock provider: training failed for " + job.spec.label();
    } else {
      status.state = JobState::succeeded;
      status.fine_tuned_model_id = model_id_for(job.spec);
    }
  } else {
    status.state = job.polls == 1 ? JobState::queued : JobState::running;
  }
  return status;
}

// --- HTTP provider -------------------------------------------------------

HttpFinetuneProvider::HttpFinetuneProvider(llm::HttpEndpoint endpoint)
    : endpoint_(std::move(endpoint)), url_(llm::split_base_url(endpoint_.base_url)) {}

namespace {

httplib::Client make_client(const llm::BaseUrl& url, double timeout_s) {
  httplib::Client client(url.origin);
  const auto secs = static_cast<time_t>(timeout_s);
  client.set_connection_timeout(secs);
  client.set_read_timeout(secs);
  return client;
}

json checked_body(const httplib::Result& res, const std::string& what) {
  if (!res) throw llm::TransientError(what + " failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw llm::TransientError(what + ": HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  if (res->status == 404) throw PreconditionError(what + ": not found: " + res->body);
  if (res->status >= 400) throw BackendError(what + " rejected: HTTP " + std::to_string(res->status) + ": " + res->body);
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw BackendError(what + ": unparseable reply: " + e.what());
  }
}

}  // namespace

std::string HttpFinetuneProvider::upload(const TrainingFile& file) {
  auto client = make_client(url_, endpoint_.timeout_s);
  httplib::Headers headers{{"Authorization", "Bearer " + endpoint_.api_key}};
  httplib::MultipartFormDataItems items = {
      {"purpose", "fine-tune", "", ""},
      {"file", file.content, "training_" + file.fingerprint.substr(0, 12) + ".jsonl", "application/jsonl"},
  };
  const auto body = checked_body(client.Post(url_.prefix + "/files", headers, items), "file upload");
  return body.at("id").get<std::string>();
}

std::string HttpFinetuneProvider::create_job(const FinetuneJobSpec& spec, const std::string& file_id) {
  spec.validate();
  auto client = make_client(url_, endpoint_.timeout_s);
  httplib::Headers headers{{"Authorization", "Bearer " + endpoint_.api_key}};
  json request;
  request["training_file"] = file_id;
  request["model"] = spec.base_model_id;
  request["hyperparameters"] = {{"n_epochs", spec.n_epochs},
                                {"learning_rate_multiplier", spec.learning_rate_multiplier}};
  const auto body = checked_body(
      client.Post(url_.prefix + "/fine_tuning/jobs", headers, request.dump(), "application/json"), "job creation");
  return body.at("id").get<std::string>();
}

JobStatus HttpFinetuneProvider::retrieve(const std::string& job_id) {
  auto client = make_client(url_, endpoint_.timeout_s);
  httplib::Headers headers{{"Authorization", "Bearer " + endpoint_.api_key}};
  return parse_job_object(
      checked_body(client.Get(url_.prefix + "/fine_tuning/jobs/" + job_id, headers), "job " + job_id));
}

JobStatus parse_job_object(const json& job) {
  JobStatus status;
  status.job_id = job.at("id").get<std::string>();
  const auto raw = job.value("status", std::string("queued"));
  if (raw == "succeeded") {
    status.state = JobState::succeeded;
    const auto& model = job.value("fine_tuned_model", json());
    if (!model.is_string()) throw DataError("succeeded job " + status.job_id + " has no fine_tuned_model");
    status.fine_tuned_model_id = model.get<std::string>();
  } else if (raw == "failed" || raw == "cancelled") {
    status.state = JobState::failed;
    const auto& error = job.value("error", json());
    status.message = error.is_object() ? error.value("message", raw) : raw;
  } else if (raw == "running") {
    status.state = JobState::running;
  } else {
    status.state = JobState::queued;
  }
  return status;
}

// --- tracking ------------------------------------------------------------

JobTracker::JobTracker(std::shared_ptr<FinetuneProvider> provider)
    : provider_(std::move(provider)), sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

std::string JobTracker::submit(const FinetuneJobSpec& spec, const std::string& file_id) {
  spec.validate();
  auto id = provider_->create_job(spec, file_id);
  std::lock_guard lock(mutex_);
  known_.insert(id);
  terminal_.erase(id);
  return id;
}

JobStatus JobTracker::poll(const std::string& job_id) {
  {
    std::lock_guard lock(mutex_);
    if (const auto it = terminal_.find(job_id); it != terminal_.end()) return it->second;
    if (!known_.contains(job_id)) throw PreconditionError("unknown job id: " + job_id);
  }
  auto status = provider_->retrieve(job_id);
  if (status.state == JobState::succeeded && !status.fine_tuned_model_id) {
    throw DataError("job " + job_id + " succeeded without a model id");
  }
  if (status.state != JobState::succeeded) status.fine_tuned_model_id.reset();
  if (is_terminal(status.state)) {
    std::lock_guard lock(mutex_);
    terminal_.emplace(job_id, status);
  }
  return status;
}

std::vector<JobStatus> JobTracker::wait_all(const std::vector<std::string>& job_ids, const PollOptions& options) {
  std::vector<JobStatus> statuses(job_ids.size());
  Rng jitter(options.jitter_seed);
  for (int round = 0; round < options.max_rounds; ++round) {
    bool pending = false;
    for (std::size_t i = 0; i < job_ids.size(); ++i) {
      if (round > 0 && is_terminal(statuses[i].state)) continue;
      statuses[i] = poll(job_ids[i]);
      pending |= !is_terminal(statuses[i].state);
    }
    if (!pending) break;
    const auto extra = options.jitter.count() > 0
                           ? static_cast<std::int64_t>(jitter.below(static_cast<std::uint64_t>(options.jitter.count())))
                           : 0;
    sleeper_(options.interval + std::chrono::milliseconds(extra));
  }
  return statuses;
}

FinetuneEvaluation evaluate_finetuned(const std::string& model_id, std::span<const DialogueTriplet> test,
                                      llm::Gateway& gateway, const llm::PromptOptions& prompt) {
  auto options = prompt;
  options.model_id = model_id;
  std::vector<llm::ChatRequest> requests;
  std::vector<EmpathyLabel> truth;
  for (const auto& t : test) {
    requests.push_back(llm::build_naive_prompt(t, options));
    truth.push_back(t.human_score);
  }
  FinetuneEvaluation out;
  out.model_id = model_id;
  std::size_t hits = 0;
  for (const auto& outcome : llm::score_empathy_batch(gateway, requests)) out.predictions.push_back(outcome.label);
  for (std::size_t i = 0; i < truth.size(); ++i) hits += out.predictions[i] && *out.predictions[i] == truth[i];
  out.accuracy = truth.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(truth.size());
  return out;
}

GridResult run_grid(const TrainingFile& file, const std::vector<GridPoint>& grid, const std::string& base_model_id,
                    JobTracker& tracker, std::span<const DialogueTriplet> test, llm::Gateway& gateway,
                    const PollOptions& poll) {
  std::vector<FinetuneJobSpec> specs;
  for (const auto& point : grid) {
    FinetuneJobSpec spec{base_model_id, point.n_epochs, point.learning_rate_multiplier, file.fingerprint};
    spec.validate();
    specs.push_back(std::move(spec));
  }
  const auto file_id = tracker.upload(file);
  std::vector<std::string> ids;
  for (const auto& spec : specs) ids.push_back(tracker.submit(spec, file_id));
  const auto statuses = tracker.wait_all(ids, poll);

  GridResult result;
  result.training_file_fingerprint = file.fingerprint;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    LedgerEntry entry{specs[i], ids[i], statuses[i], std::nullopt, {}};
    if (statuses[i].state == JobState::succeeded) {
      auto evaluation = evaluate_finetuned(*statuses[i].fine_tuned_model_id, test, gateway);
      entry.accuracy = evaluation.accuracy;
      entry.predictions = std::move(evaluation.predictions);
    }
    result.entries.push_back(std::move(entry));
  }
  return result;
}

ordered_json ledger_to_json(const GridResult& result) {
  ordered_json out;
  out["training_file_fingerprint"] = result.training_file_fingerprint;
  out["jobs"] = ordered_json::array();
  for (const auto& e : result.entries) {
    ordered_json j;
    j["spec"] = e.spec.to_json();
    j["job_id"] = e.job_id;
    j["state"] = to_string(e.status.state);
    j["fine_tuned_model_id"] = e.status.fine_tuned_model_id ? ordered_json(*e.status.fine_tuned_model_id) : ordered_json();
    j["message"] = e.status.message;
    j["accuracy"] = e.accuracy ? ordered_json(*e.accuracy) : ordered_json();
    out["jobs"].push_back(std::move(j));
  }
  return out;
}

GridResult ledger_from_json(const json& doc) {
  GridResult out;
  out.training_file_fingerprint = doc.value("training_file_fingerprint", std::string());
  for (const auto& j : doc.at("jobs")) {
    LedgerEntry e{FinetuneJobSpec::from_json(j.at("spec")), j.at("job_id").get<std::string>(), {}, std::nullopt, {}};
    e.status.job_id = e.job_id;
    e.status.state = parse_state(j.at("state").get<std::string>());
    if (j.at("fine_tuned_model_id").is_string()) e.status.fine_tuned_model_id = j["fine_tuned_model_id"].get<std::string>();
    e.status.message = j.value("message", std::string());
    if (j.at("accuracy").is_number()) e.accuracy = j["accuracy"].get<double>();
    out.entries.push_back(std::move(e));
  }
  return out;
}

void save_ledger(const std::filesystem::path& path, const GridResult& result) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write job ledger " + path.string());
  out << ledger_to_json(result).dump(2) << '\n';
}

GridResult load_ledger(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read job ledger " + path.string());
  try {
    return ledger_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError("corrupt job ledger " + path.string() + ": " + e.what());
  }
}

}  // namespace empathy::finetune
