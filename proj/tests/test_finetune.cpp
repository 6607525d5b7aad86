#include <doctest.h>

#include <atomic>

#include "empathy/finetune.hpp"
#include "empathy/hash.hpp"
#include "empathy/llm/prompts.hpp"
#include "local_server.hpp"
#include "synthetic_llm.hpp"
#include "test_support.hpp"

using namespace empathy;
using namespace empathy::finetune;
using testing::TempDir;

namespace {

std::string escaped(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '\n') out += "\\n";
    else if (c == '"') out += "\\\"";
    else out += c;
  }
  return out;
}

void skip_sleep(JobTracker& tracker, std::vector<long>* naps = nullptr) {
  tracker.set_sleeper([naps](std::chrono::milliseconds d) {
    if (naps) naps->push_back(static_cast<long>(d.count()));
  });
}

}  // namespace

TEST_SUITE("finetune") {

TEST_CASE("training file lines are exact chat examples") {
  const std::vector<DialogueTriplet> train{testing::triplet("a", 2), testing::triplet("b", 3)};
  const auto file = export_training_file(train);
  CHECK(file.examples == 2);
  const std::string system = escaped(std::string(llm::kNaiveInstruction) + "\n\n" +
                                     std::string(llm::kScoreOnlyInstruction));
  const std::string first =
      R"({"messages":[{"role":"system","content":")" + system +
      R"("},{"role":"user","content":"situation context:\nsituation for a\n\nspeaker utterance:\nutterance for a\n\nresponse:\nresponse for a"},{"role":"assistant","content":"2"}]})";
  CHECK(file.content.substr(0, file.content.find('\n')) == first);
  CHECK(file.content.back() == '\n');
  CHECK(file.fingerprint == sha256_hex(file.content));
}

TEST_CASE("export and import round trip") {
  const auto corpus = testing::corpus_with_counts(3, 4, 5);
  auto records = corpus.records;
  records[0].response = "quotes \" and\nnewlines\tand unicode é";
  const auto file = export_training_file(records);
  const auto back = import_training_file(file.content);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].dialogue.situation == records[i].situation);
    CHECK(back[i].dialogue.utterance == records[i].utterance);
    CHECK(back[i].dialogue.response == records[i].response);
    CHECK(back[i].label == records[i].human_score);
  }
  CHECK_THROWS_AS(import_training_file("not json\n"), DataError);
  CHECK_THROWS_AS(import_training_file(R"({"messages":[]})"), DataError);
  auto bad_target = file.content.substr(0, file.content.find('\n'));
  bad_target.replace(bad_target.rfind("\"1\""), 3, "\"4\"");
  CHECK_THROWS_AS(import_training_file(bad_target), DataError);
}

TEST_CASE("job spec labels, validation and the default grid") {
  FinetuneJobSpec spec;
  spec.n_epochs = 4;
  spec.learning_rate_multiplier = 0.5;
  CHECK(spec.label() == "e4-lrm0.50");
  spec.n_epochs = 0;
  CHECK_THROWS_AS(spec.validate(), PreconditionError);
  spec.n_epochs = 3;
  spec.learning_rate_multiplier = 0.0;
  CHECK_THROWS_AS(spec.validate(), PreconditionError);
  spec.learning_rate_multiplier = 1.8;
  CHECK(spec.label() == "e3-lrm1.80");
  const auto back = FinetuneJobSpec::from_json(nlohmann::json::parse(spec.to_json().dump()));
  CHECK(back.label() == spec.label());
  CHECK(back.base_model_id == spec.base_model_id);

  const auto grid = default_grid();
  REQUIRE(grid.size() == 5);
  CHECK(grid[0].n_epochs == 3);
  CHECK(grid[0].learning_rate_multiplier == 1.80);
  for (std::size_t i = 1; i < 5; ++i) {
    CHECK(grid[i].n_epochs == 4);
    CHECK(grid[i].learning_rate_multiplier == doctest::Approx(0.25 * static_cast<double>(i)));
  }
}

TEST_CASE("mock provider walks queued, running, terminal") {
  auto provider = std::make_shared<MockFinetuneProvider>(3, std::set<std::string>{"e3-lrm1.80"});
  JobTracker tracker(provider);
  skip_sleep(tracker);
  const auto file = export_training_file(testing::corpus_with_counts(1, 1, 1).records);
  const auto file_id = tracker.upload(file);
  FinetuneJobSpec good{"base", 4, 0.5, file.fingerprint};
  FinetuneJobSpec bad{"base", 3, 1.8, file.fingerprint};
  const auto a = tracker.submit(good, file_id);
  const auto b = tracker.submit(bad, file_id);
  CHECK(tracker.poll(a).state == JobState::queued);
  CHECK(tracker.poll(a).state == JobState::running);
  const auto done = tracker.poll(a);
  CHECK(done.state == JobState::succeeded);
  CHECK(done.fine_tuned_model_id == MockFinetuneProvider::model_id_for(good));
  CHECK(*done.fine_tuned_model_id == "ft:base:mock:e4-lrm0.50");
  CHECK(tracker.poll(a) == done);

  tracker.poll(b);
  tracker.poll(b);
  const auto failed = tracker.poll(b);
  CHECK(failed.state == JobState::failed);
  CHECK_FALSE(failed.fine_tuned_model_id.has_value());
  CHECK_FALSE(failed.message.empty());

  CHECK_THROWS_AS(tracker.poll("nope"), PreconditionError);
  CHECK_THROWS_AS(tracker.submit(good, "file-unknown"), BackendError);
  FinetuneJobSpec invalid = good;
  invalid.n_epochs = 0;
  CHECK_THROWS_AS(tracker.submit(invalid, file_id), PreconditionError);
}

TEST_CASE("terminal statuses are frozen") {
  struct Flaky final : FinetuneProvider {
    std::atomic<int> retrievals{0};
    std::string upload(const TrainingFile&) override { return "file-1"; }
    std::string create_job(const FinetuneJobSpec&, const std::string&) override { return "job-1"; }
    JobStatus retrieve(const std::string& id) override {
      ++retrievals;
      JobStatus s{id, retrievals == 1 ? JobState::succeeded : JobState::failed, std::nullopt, ""};
      if (s.state == JobState::succeeded) s.fine_tuned_model_id = "ft:x";
      return s;
    }
  };
  auto provider = std::make_shared<Flaky>();
  JobTracker tracker(provider);
  skip_sleep(tracker);
  const auto id = tracker.submit(FinetuneJobSpec{}, "file-1");
  CHECK(tracker.poll(id).state == JobState::succeeded);
  CHECK(tracker.poll(id).state == JobState::succeeded);
  CHECK(tracker.wait_all({id})[0].state == JobState::succeeded);
  CHECK(provider->retrievals == 1);
}

TEST_CASE("wait_all sleeps between rounds with bounded jitter") {
  auto provider = std::make_shared<MockFinetuneProvider>(4);
  std::vector<long> naps;
  JobTracker tracker(provider);
  skip_sleep(tracker, &naps);
  const auto file = export_training_file(testing::corpus_with_counts(1, 1, 1).records);
  const auto file_id = tracker.upload(file);
  std::vector<std::string> ids;
  for (const auto& p : default_grid()) ids.push_back(tracker.submit({"base", p.n_epochs, p.learning_rate_multiplier, ""}, file_id));
  PollOptions options;
  options.interval = std::chrono::milliseconds(100);
  options.jitter = std::chrono::milliseconds(10);
  const auto statuses = tracker.wait_all(ids, options);
  for (const auto& s : statuses) CHECK(s.state == JobState::succeeded);
  CHECK(naps.size() == 3);
  for (long n : naps) CHECK((n >= 100 && n < 110));

  auto slow = std::make_shared<MockFinetuneProvider>(50);
  JobTracker capped(slow);
  skip_sleep(capped);
  const auto id = capped.submit({"base", 1, 1.0, ""}, capped.upload(file));
  options.max_rounds = 2;
  CHECK(capped.wait_all({id}, options)[0].state == JobState::running);
}

TEST_CASE("job objects map to statuses") {
  using nlohmann::json;
  CHECK(parse_job_object(json{{"id", "j"}, {"status", "validating_files"}}).state == JobState::queued);
  CHECK(parse_job_object(json{{"id", "j"}, {"status", "running"}}).state == JobState::running);
  const auto ok = parse_job_object(json{{"id", "j"}, {"status", "succeeded"}, {"fine_tuned_model", "ft:m"}});
  CHECK(ok.fine_tuned_model_id == "ft:m");
  CHECK_THROWS_AS(parse_job_object(json{{"id", "j"}, {"status", "succeeded"}, {"fine_tuned_model", nullptr}}),
                  DataError);
  const auto failed =
      parse_job_object(json{{"id", "j"}, {"status", "failed"}, {"error", {{"message", "bad data"}}}});
  CHECK(failed.state == JobState::failed);
  CHECK(failed.message == "bad data");
  CHECK(parse_job_object(json{{"id", "j"}, {"status", "cancelled"}}).state == JobState::failed);
}

TEST_CASE("HTTP provider speaks the files and jobs endpoints") {
  testing::LocalServer server;
  std::string uploaded, purpose, auth;
  nlohmann::json job_request;
  std::atomic<int> polls{0};
  server.routes().Post("/v1/files", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    uploaded = req.get_file_value("file").content;
    purpose = req.get_file_value("purpose").content;
    res.set_content(R"({"id":"file-abc","object":"file"})", "application/json");
  });
  server.routes().Post("/v1/fine_tuning/jobs", [&](const httplib::Request& req, httplib::Response& res) {
    job_request = nlohmann::json::parse(req.body);
    res.set_content(R"({"id":"ftjob-1","status":"validating_files"})", "application/json");
  });
  server.routes().Get("/v1/fine_tuning/jobs/ftjob-1", [&](const httplib::Request&, httplib::Response& res) {
    const int n = ++polls;
    res.set_content(n < 2 ? R"({"id":"ftjob-1","status":"running"})"
                          : R"({"id":"ftjob-1","status":"succeeded","fine_tuned_model":"ft:gpt:org::x1"})",
                    "application/json");
  });
  server.routes().Get("/v1/fine_tuning/jobs/busy", [](const httplib::Request&, httplib::Response& res) {
    res.status = 429;
    res.set_content("slow down", "text/plain");
  });
  server.routes().Get("/v1/fine_tuning/jobs/gone", [](const httplib::Request&, httplib::Response& res) {
    res.status = 404;
    res.set_content(R"({"error":{"message":"no such job"}})", "application/json");
  });
  server.start();

  auto provider = std::make_shared<HttpFinetuneProvider>(llm::HttpEndpoint{server.base_url(), "sk-test", 5.0});
  JobTracker tracker(provider);
  skip_sleep(tracker);
  const auto file = export_training_file(testing::corpus_with_counts(2, 1, 1).records);
  const auto file_id = tracker.upload(file);
  CHECK(file_id == "file-abc");
  CHECK(uploaded == file.content);
  CHECK(purpose == "fine-tune");
  CHECK(auth == "Bearer sk-test");

  const auto id = tracker.submit({"gpt-4o-mini-2024-07-18", 4, 0.75, file.fingerprint}, file_id);
  CHECK(id == "ftjob-1");
  CHECK(job_request["training_file"] == "file-abc");
  CHECK(job_request["model"] == "gpt-4o-mini-2024-07-18");
  CHECK(job_request["hyperparameters"]["n_epochs"] == 4);
  CHECK(job_request["hyperparameters"]["learning_rate_multiplier"] == 0.75);

  const auto statuses = tracker.wait_all({id}, PollOptions{10, std::chrono::milliseconds(1), {}, 0});
  CHECK(statuses[0].state == JobState::succeeded);
  CHECK(statuses[0].fine_tuned_model_id == "ft:gpt:org::x1");

  CHECK_THROWS_AS(provider->retrieve("busy"), llm::TransientError);
  CHECK_THROWS_AS(provider->retrieve("gone"), PreconditionError);
}

TEST_CASE("grid run evaluates succeeded models and the ledger round-trips") {
  TempDir dir;
  const auto corpus = testing::corpus_with_counts(6, 6, 6);
  const auto split = empathy::split(corpus, 0.5, 3);
  llm::BackendConfig cfg;
  cfg.mode = llm::BackendMode::live;
  cfg.cache_dir = dir / "cache";
  cfg.requests_per_minute = 1e9;
  llm::Gateway gateway(cfg, std::make_shared<tools::SyntheticLlm>(corpus.records));
  JobTracker tracker(std::make_shared<MockFinetuneProvider>(2, std::set<std::string>{"e3-lrm1.80"}));
  skip_sleep(tracker);
  const auto file = export_training_file(split);
  CHECK(file.examples == split.train.size());

  const auto result = run_grid(file, default_grid(), "gpt-4o-mini-2024-07-18", tracker, split.test, gateway);
  REQUIRE(result.entries.size() == 5);
  CHECK(result.training_file_fingerprint == file.fingerprint);
  CHECK(result.entries[0].status.state == JobState::failed);
  CHECK_FALSE(result.entries[0].accuracy.has_value());
  CHECK(result.entries[0].predictions.empty());
  for (std::size_t i = 1; i < 5; ++i) {
    const auto& e = result.entries[i];
    CHECK(e.status.state == JobState::succeeded);
    CHECK(e.status.fine_tuned_model_id == MockFinetuneProvider::model_id_for(e.spec));
    REQUIRE(e.accuracy.has_value());
    CHECK(*e.accuracy >= 0.0);
    CHECK(*e.accuracy <= 1.0);
    CHECK(e.predictions.size() == split.test.size());
    CHECK(e.spec.training_file_fingerprint == file.fingerprint);
  }

  save_ledger(dir / "ledger.json", result);
  const auto back = load_ledger(dir / "ledger.json");
  CHECK(ledger_to_json(back).dump() == ledger_to_json(result).dump());
  testing::spit(dir / "bad.json", "{");
  CHECK_THROWS_AS(load_ledger(dir / "bad.json"), DataError);
  CHECK_THROWS_AS(load_ledger(dir / "missing.json"), DataError);
}

}  // TEST_SUITE
