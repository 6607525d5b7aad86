#include <doctest.h>

#include "empathy/csv.hpp"
#include "empathy/experiment.hpp"
#include "empathy/hash.hpp"
#include "empathy/miti.hpp"
#include "test_support.hpp"

using namespace empathy;
using namespace empathy::bench;
using nlohmann::json;
using nlohmann::ordered_json;
using testing::TempDir;
namespace fs = std::filesystem;

namespace {

json miti_only_config(const std::string& out) {
  return json{{"dataset", "corpus.jsonl"},
              {"seed", 7},
              {"split_ratio", 0.75},
              {"backend", {{"mode", "offline"}}},
              {"llm", {{"models", json::array()}, {"prompts", json::array()}}},
              {"feature_families", {"miti"}},
              {"classifiers", {{{"family", "LR"}}, {{"family", "DT"}}, {{"family", "SVC"}}}},
              {"rfe", {{"enabled", false}}},
              {"output_dir", out}};
}

/// Codes tied to the label so that MITI features carry signal.
void write_corpus(const fs::path& path, std::size_t per_class) {
  const std::vector<std::string> codes[3] = {{"Advise without Permission", "Confront"},
                                            {"Give Information", "Closed Question"},
                                            {"Affirm", "Complex Reflection"}};
  std::vector<DialogueTriplet> records;
  Rng rng(11);
  for (std::size_t i = 0; i < 3 * per_class; ++i) {
    const int label = static_cast<int>(i % 3) + 1;
    auto c = codes[label - 1];
    if (rng.below(4) == 0) c = codes[rng.below(3)];
    records.push_back(testing::triplet("rec-" + std::to_string(i), label, c));
  }
  write_records_jsonl(path, records);
}

EvaluationReport synthetic_report(bool with_rfe) {
  EvaluationReport r;
  const std::vector<std::string> ids{"t0", "t1", "t2", "t3", "t4", "t5"};
  const std::vector<EmpathyLabel> truth{EmpathyLabel::from_int(1), EmpathyLabel::from_int(2),
                                        EmpathyLabel::from_int(3), EmpathyLabel::from_int(1),
                                        EmpathyLabel::from_int(2), EmpathyLabel::from_int(3)};
  r.dataset["test_truth"] = ordered_json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) r.dataset["test_truth"].push_back({{"id", ids[i]}, {"label", truth[i].value()}});
  r.classifiers["results"] = ordered_json::array();
  int n = 0;
  for (const char* f : {"embedding", "miti", "subfactor", "combined"}) {
    for (const char* c : {"LR", "SVC", "DT", "RF", "MLP"}) {
      std::vector<std::optional<EmpathyLabel>> pred;
      for (std::size_t i = 0; i < ids.size(); ++i) pred.push_back(EmpathyLabel::from_index(static_cast<int>((i + n) % 3)));
      const auto cm = ConfusionMatrix::from(pred, truth);
      ordered_json e{{"features", f}, {"classifier", c}, {"accuracy", cm.accuracy()}, {"correct", cm.trace()},
                     {"total", cm.total()}, {"record_ids", ids}, {"confusion", cm.to_json()}};
      e["predictions"] = ordered_json::array();
      for (const auto& p : pred) e["predictions"].push_back(p->value());
      r.classifiers["results"].push_back(e);
      ++n;
    }
  }
  if (with_rfe) {
    ordered_json sweep = ordered_json::array();
    for (int k = 1; k <= 3; ++k) sweep.push_back({{"k", k}, {"accuracy", 0.25 * k}});
    r.rfe["curves"] = ordered_json::array({{{"classifier", "LR"}, {"sweep", sweep}}});
    r.importance = ordered_json::array();
    for (const char* feat : {"a", "b", "c"}) {
      r.importance.push_back({{"feature", feat}, {"models", {{{"model", "LR"}, {"rank", 1}, {"importance", 0.5}, {"selected", true}}}}});
    }
  }
  return r;
}

std::size_t line_count(const fs::path& p) {
  const auto s = testing::slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config validation names the offending key") {
  const auto base = miti_only_config("out");
  auto expect_error = [](json doc, const std::string& key) {
    try {
      ExperimentConfig::from_json(doc, ".");
      FAIL("accepted an invalid config for " << key);
    } catch (const PreconditionError& e) {
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  };
  CHECK_NOTHROW(ExperimentConfig::from_json(base, "."));
  auto doc = base;
  doc["colour"] = "blue";
  expect_error(doc, "colour");
  doc = base;
  doc.erase("dataset");
  expect_error(doc, "dataset");
  doc = base;
  doc["split_ratio"] = 1.0;
  expect_error(doc, "split_ratio");
  doc = base;
  doc["seed"] = -3;
  expect_error(doc, "seed");
  doc = base;
  doc["backend"] = {{"mode", "mock"}};
  expect_error(doc, "fixture_dir");
  doc = base;
  doc["llm"] = {{"models", {"m"}}, {"prompts", {"clever"}}};
  expect_error(doc, "llm.prompts");
  doc = base;
  doc["llm"] = {{"models", {"m"}}, {"prompts", {"subfactor_V1"}}};
  expect_error(doc, "llm.prompts");
  doc = base;
  doc["rfe"] = {{"enabled", true}, {"selected_k", 0}};
  expect_error(doc, "selected_k");
  doc = base;
  doc["feature_families"] = {"subfactor"};
  expect_error(doc, "feature_registry");
  doc = base;
  doc["finetune"] = {{"provider", "remote"}};
  expect_error(doc, "finetune.provider");
  doc = base;
  doc["classifiers"] = {{{"family", "LR"}, {"hyperparameters", {{"C", -1}}}}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc, "."), PreconditionError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json::array(), "."), PreconditionError);
}

TEST_CASE("config paths resolve against the config directory and round-trip") {
  TempDir dir;
  auto doc = miti_only_config("out");
  doc["backend"] = {{"mode", "live"}, {"cache_dir", "cache"}};
  testing::spit(dir / "cfg.json", doc.dump());
  const auto c = ExperimentConfig::load(dir / "cfg.json");
  CHECK(c.resolve("corpus.jsonl") == dir / "corpus.jsonl");
  CHECK(c.backend.cache_dir == dir / "cache");
  CHECK(c.resolve("/abs/x") == fs::path("/abs/x"));
  const auto canonical = c.to_json();
  CHECK_FALSE(canonical.contains("output_dir"));
  CHECK(canonical.dump().find("cache") == std::string::npos);
  CHECK(ExperimentConfig::from_json(json::parse(canonical.dump()), dir.path()).to_json() == canonical);
  testing::spit(dir / "bad.json", "{");
  CHECK_THROWS_AS(ExperimentConfig::load(dir / "bad.json"), PreconditionError);
}

TEST_CASE("stage seeds are hashes of the stage name and global seed") {
  CHECK(stage_seed(42, "split") == hash64("split:42"));
  CHECK(stage_seed(42, "split") != stage_seed(42, "balance"));
  CHECK(stage_seed(42, "split") != stage_seed(43, "split"));
  const auto digest = sha256_hex("split:42");
  CHECK(stage_seed(42, "split") == std::stoull(digest.substr(0, 16), nullptr, 16));
}

TEST_CASE("confusion matrices of a balanced test split") {
  std::vector<EmpathyLabel> truth;
  std::vector<std::optional<EmpathyLabel>> pred;
  for (std::size_t i = 0; i < 384; ++i) {
    truth.push_back(EmpathyLabel::from_index(static_cast<int>(i % 3)));
    if (i % 17 == 0) pred.push_back(std::nullopt);
    else pred.push_back(EmpathyLabel::from_index(static_cast<int>((i * 7 / 5) % 3)));
  }
  const auto cm = ConfusionMatrix::from(pred, truth);
  std::size_t hits = 0, failures = 0;
  for (std::size_t i = 0; i < 384; ++i) {
    if (!pred[i]) ++failures;
    else hits += *pred[i] == truth[i];
  }
  CHECK(cm.trace() == hits);
  CHECK(cm.failures == failures);
  CHECK(cm.total() == 384);
  CHECK(cm.accuracy() == doctest::Approx(static_cast<double>(hits) / 384.0));
  const auto j = cm.to_json();
  for (std::size_t t = 0; t < 3; ++t) {
    std::size_t row = 0;
    for (std::size_t p = 0; p < 3; ++p) row += j["counts"][t][p].get<std::size_t>();
    std::size_t missing = 0;
    for (std::size_t i = t; i < 384; i += 3) missing += !pred[i];
    CHECK(row + missing == 128);
  }
  CHECK_THROWS_AS(ConfusionMatrix::from(std::span(pred).first(10), truth), PreconditionError);
}

TEST_CASE("accuracy text has four decimals") {
  CHECK(accuracy_text(179.0 / 384.0) == "0.4661");
  CHECK(accuracy_text(1.0) == "1.0000");
  CHECK(accuracy_text(0.0) == "0.0000");
}

TEST_CASE("report emission writes the accuracy table and plots only on request") {
  TempDir dir;
  const auto r = synthetic_report(true);
  const auto files = emit_report(r, dir / "plain");
  CHECK(std::find(files.begin(), files.end(), "classifier_accuracy.csv") != files.end());
  for (const auto& f : files) CHECK_FALSE(f.ends_with(".svg"));
  const auto rows = csv::read_file(dir / "plain/classifier_accuracy.csv");
  REQUIRE(rows.size() == 21);
  CHECK(rows[0] == csv::Row{"features", "classifier", "accuracy", "correct", "total"});
  for (const char* f : {"embedding", "miti", "subfactor", "combined"}) {
    CHECK(line_count(dir / ("plain/accuracy_" + std::string(f) + ".csv")) == 6);
  }
  CHECK(line_count(dir / "plain/predictions.csv") == 1 + 20 * 6);
  CHECK(line_count(dir / "plain/confusion_matrices.csv") == 1 + 20 * 3);
  CHECK(line_count(dir / "plain/sweep_curves.csv") == 4);
  CHECK(csv::read_file(dir / "plain/importance.csv")[0] ==
        csv::Row{"feature", "LR_rank", "LR_importance", "LR_selected"});
  const auto report = json::parse(testing::slurp(dir / "plain/report.json"));
  CHECK(report["classifiers"]["results"].size() == 20);

  const auto plotted = emit_report(r, dir / "plot", EmitOptions{true});
  CHECK(fs::exists(dir / "plot/sweep_curves.svg"));
  CHECK(fs::exists(dir / "plot/classifier_accuracy.svg"));
  CHECK(plotted.size() == files.size() + 2);

  const auto no_rfe = emit_report(synthetic_report(false), dir / "no_rfe", EmitOptions{true});
  CHECK_FALSE(fs::exists(dir / "no_rfe/sweep_curves.csv"));
  CHECK_FALSE(fs::exists(dir / "no_rfe/sweep_curves.svg"));
}

TEST_CASE("MITI-only run needs no model backend and is reproducible") {
  TempDir dir;
  write_corpus(dir / "corpus.jsonl", 20);
  const auto cfg_a = ExperimentConfig::from_json(miti_only_config((dir / "a").string()), dir.path());
  const auto cfg_b = ExperimentConfig::from_json(miti_only_config((dir / "b").string()), dir.path());
  Runner a(cfg_a);
  const auto ra = a.run_all();
  CHECK_FALSE(a.gateway_stats().has_value());
  Runner(cfg_b).run_all();

  CHECK(ra.llm_baselines.is_null());
  REQUIRE(ra.classifiers["results"].size() == 3);
  for (const auto& e : ra.classifiers["results"]) {
    CHECK(e["features"] == "miti");
    CHECK(e["total"] == 15);
    CHECK(e["accuracy"].get<double>() > 0.5);
  }
  CHECK(ra.summary.contains("miti_best"));
  CHECK(ra.dataset["train_size"] == 45);
  CHECK(ra.dataset["test_size"] == 15);
  CHECK(ra.dataset["balanced_class_counts"] == json::array({20, 20, 20}));

  for (const char* f : {"report.json", "classifier_accuracy.csv", "predictions.csv", "confusion_matrices.csv"}) {
    INFO(f);
    CHECK(testing::slurp(dir / "a/report" / f) == testing::slurp(dir / "b/report" / f));
  }
  CHECK_FALSE(fs::exists(dir / "a/report/classifier_accuracy.svg"));

  const auto& m = ra.manifest;
  CHECK(m["dataset_checksum"] == sha256_file(dir / "corpus.jsonl"));
  CHECK(m["stage_seeds"]["split"] == stage_seed(7, "split"));
  std::string codes;
  for (const auto& c : MitiVocabulary::standard().codes()) codes += (codes.empty() ? "" : "|") + c;
  CHECK(m["miti_vocabulary"] == codes);
  for (const auto& [name, hash] : m["feature_stores"].items()) {
    CHECK(hash == sha256_file(dir / "a/features" / name));
  }
  CHECK(m["feature_stores"].contains("miti_train.csv"));
  CHECK(m["model_fingerprints"].size() == 3);
}

TEST_CASE("stage failures name the stage and leave earlier outputs") {
  TempDir dir;
  write_corpus(dir / "corpus.jsonl", 5);
  Runner runner(ExperimentConfig::from_json(miti_only_config((dir / "out").string()), dir.path()));
  try {
    runner.train();
    FAIL("train ran without a split");
  } catch (const StageError& e) {
    CHECK(e.stage() == "train");
    CHECK(std::string(e.what()).find("stage 'train'") != std::string::npos);
  }
  runner.ingest();
  runner.balance();
  runner.split();
  CHECK(fs::exists(dir / "out/results/dataset.json"));

  auto doc = miti_only_config((dir / "missing").string());
  doc["dataset"] = "nope.jsonl";
  Runner broken(ExperimentConfig::from_json(doc, dir.path()));
  try {
    broken.ingest();
    FAIL("ingest read a missing file");
  } catch (const StageError& e) {
    CHECK(e.stage() == "ingest");
  }
}

}  // TEST_SUITE
