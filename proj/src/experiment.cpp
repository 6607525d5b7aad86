#include "empathy/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "empathy/hash.hpp"
#include "empathy/llm/prompts.hpp"
#include "empathy/llm/scoring.hpp"
#include "empathy/selector.hpp"
#include "empathy/subfactors.hpp"
#include "empathy/text.hpp"

namespace empathy::bench {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

// --- config --------------------------------------------------------------

namespace {

[[noreturn]] void config_error(const std::string& key, const std::string& why) {
  throw PreconditionError("config: '" + key + "' " + why);
}

template <typename T>
T get_as(const json& doc, const std::string& key, T fallback) {
  if (!doc.contains(key) || doc.at(key).is_null()) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(key, "has the wrong type");
  }
}

std::vector<std::string> string_list(const json& doc, const std::string& key, std::vector<std::string> fallback) {
  if (!doc.contains(key)) return fallback;
  const auto& v = doc.at(key);
  if (!v.is_array()) config_error(key, "must be a list");
  std::vector<std::string> out;
  for (const auto& item : v) {
    if (!item.is_string()) config_error(key, "must contain strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

const std::set<std::string> kTopLevelKeys = {
    "dataset",    "miti_vocabulary", "seed",     "split_ratio", "backend",     "registries",
    "feature_registry", "llm",       "embedding", "subfactor_model", "feature_families", "classifiers",
    "standardize", "rfe",            "finetune", "output_dir",  "plot"};

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw PreconditionError("config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (!kTopLevelKeys.contains(key)) config_error(key, "is not a recognized setting");
  }
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.dataset = get_as<std::string>(doc, "dataset", "");
  if (c.dataset.empty()) config_error("dataset", "is required");
  if (doc.contains("miti_vocabulary") && !doc["miti_vocabulary"].is_null()) {
    c.miti_vocabulary = get_as<std::string>(doc, "miti_vocabulary", "");
  }
  if (doc.contains("seed")) {
    const auto& seed = doc["seed"];
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
      config_error("seed", "must be a non-negative integer");
    }
  }
  c.seed = get_as<std::uint64_t>(doc, "seed", c.seed);
  c.split_ratio = get_as<double>(doc, "split_ratio", c.split_ratio);
  if (!(c.split_ratio > 0.0 && c.split_ratio < 1.0)) config_error("split_ratio", "must lie strictly between 0 and 1");

  const auto backend = doc.value("backend", json::object());
  if (!backend.is_object()) config_error("backend", "must be an object");
  c.backend.mode = llm::parse_backend_mode(get_as<std::string>(backend, "mode", "offline"));
  c.cache_dir = get_as<std::string>(backend, "cache_dir", "");
  c.fixture_dir = get_as<std::string>(backend, "fixture_dir", "");
  c.backend.base_url = get_as<std::string>(backend, "base_url", c.backend.base_url);
  c.backend.api_key_env = get_as<std::string>(backend, "api_key_env", c.backend.api_key_env);
  c.backend.timeout_s = get_as<double>(backend, "timeout_s", c.backend.timeout_s);
  c.backend.max_retries = get_as<int>(backend, "max_retries", c.backend.max_retries);
  c.backend.requests_per_minute = get_as<double>(backend, "requests_per_minute", c.backend.requests_per_minute);
  c.backend.max_in_flight = get_as<int>(backend, "max_in_flight", c.backend.max_in_flight);
  if (c.backend.max_in_flight < 1) config_error("backend.max_in_flight", "must be >= 1");
  if (c.backend.mode == llm::BackendMode::mock && c.fixture_dir.empty()) {
    config_error("backend.fixture_dir", "is required in mock mode");
  }

  const auto registries = doc.value("registries", json::object());
  for (const auto& [name, path] : registries.items()) {
    if (!path.is_string()) config_error("registries." + name, "must be a path");
    c.registries[parse_registry_version(name)] = path.get<std::string>();
  }
  c.feature_registry = parse_registry_version(get_as<std::string>(doc, "feature_registry", "V2"));

  const auto llm_section = doc.value("llm", json::object());
  c.llm_models = string_list(llm_section, "models", c.llm_models);
  c.llm_prompts = string_list(llm_section, "prompts", c.llm_prompts);
  for (const auto& p : c.llm_prompts) {
    if (p == "naive") continue;
    if (!p.starts_with("subfactor_")) config_error("llm.prompts", "entry '" + p + "' is not naive or subfactor_<version>");
    const auto version = parse_registry_version(p.substr(10));
    if (!c.registries.contains(version)) config_error("llm.prompts", "entry '" + p + "' has no registry path");
  }
  c.subfactor_model = get_as<std::string>(doc, "subfactor_model", c.subfactor_model);

  const auto embedding = doc.value("embedding", json::object());
  c.embedding.model_id = get_as<std::string>(embedding, "model_id", c.embedding.model_id);
  c.embedding.dimension = get_as<std::size_t>(embedding, "dimension", c.embedding.dimension);
  c.embedding.response_only = get_as<bool>(embedding, "response_only", c.embedding.response_only);

  if (doc.contains("feature_families")) {
    c.feature_families.clear();
    for (const auto& f : string_list(doc, "feature_families", {})) c.feature_families.push_back(parse_feature_family(f));
  }
  if (doc.contains("classifiers")) {
    if (!doc["classifiers"].is_array()) config_error("classifiers", "must be a list");
    for (const auto& item : doc["classifiers"]) {
      ClassifierEntry e{models::parse_family(item.is_string() ? item.get<std::string>()
                                                              : item.at("family").get<std::string>())};
      if (item.is_object()) e.hyperparameters = item.value("hyperparameters", json::object());
      models::ClassifierSpec::make(e.family, e.hyperparameters);
      c.classifiers.push_back(std::move(e));
    }
  } else {
    for (auto f : models::kAllFamilies) c.classifiers.push_back({f});
  }
  c.standardize = get_as<bool>(doc, "standardize", c.standardize);

  const auto rfe = doc.value("rfe", json::object());
  c.rfe.enabled = get_as<bool>(rfe, "enabled", c.rfe.enabled);
  for (const auto& f : string_list(rfe, "families", {})) c.rfe.families.push_back(models::parse_family(f));
  if (rfe.contains("selected_k") && !rfe["selected_k"].is_null()) {
    c.rfe.selected_k = get_as<std::size_t>(rfe, "selected_k", 0);
    if (*c.rfe.selected_k < 1) config_error("rfe.selected_k", "must be >= 1");
  }
  c.rfe.permutation_repeats = get_as<int>(rfe, "permutation_repeats", c.rfe.permutation_repeats);
  if (c.rfe.permutation_repeats < 1) config_error("rfe.permutation_repeats", "must be >= 1");

  const auto ft = doc.value("finetune", json::object());
  c.finetune.enabled = get_as<bool>(ft, "enabled", c.finetune.enabled);
  c.finetune.provider = get_as<std::string>(ft, "provider", c.finetune.provider);
  if (c.finetune.provider != "mock" && c.finetune.provider != "live") config_error("finetune.provider", "must be mock or live");
  c.finetune.base_model_id = get_as<std::string>(ft, "base_model_id", c.finetune.base_model_id);
  if (ft.contains("grid")) {
    c.finetune.grid.clear();
    for (const auto& point : ft["grid"]) {
      finetune::GridPoint g{point.at("n_epochs").get<int>(), point.at("learning_rate_multiplier").get<double>()};
      finetune::FinetuneJobSpec{c.finetune.base_model_id, g.n_epochs, g.learning_rate_multiplier, ""}.validate();
      c.finetune.grid.push_back(g);
    }
  }
  c.finetune.mock_polls = get_as<int>(ft, "mock_polls", c.finetune.mock_polls);
  c.finetune.mock_failing = string_list(ft, "mock_failing", {});
  c.finetune.poll_interval_ms = get_as<int>(ft, "poll_interval_ms", c.finetune.poll_interval_ms);
  c.finetune.poll_jitter_ms = get_as<int>(ft, "poll_jitter_ms", c.finetune.poll_jitter_ms);

  c.output_dir = get_as<std::string>(doc, "output_dir", c.output_dir);
  c.plot = get_as<bool>(doc, "plot", c.plot);

  if (!c.cache_dir.empty()) c.backend.cache_dir = c.resolve(c.cache_dir);
  if (!c.fixture_dir.empty()) c.backend.fixture_dir = c.resolve(c.fixture_dir);
  if (c.needs_subfactors() && !c.registries.contains(c.feature_registry)) {
    config_error("feature_registry", "names a registry without a path under 'registries'");
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw PreconditionError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

ordered_json ExperimentConfig::to_json() const {
  ordered_json out;
  out["dataset"] = dataset;
  out["miti_vocabulary"] = miti_vocabulary ? ordered_json(*miti_vocabulary) : ordered_json();
  out["seed"] = seed;
  out["split_ratio"] = split_ratio;
  out["backend"] = {{"mode", llm::to_string(backend.mode)}, {"base_url", backend.base_url}};
  ordered_json regs = ordered_json::object();
  for (const auto& [v, p] : registries) regs[std::string(to_string(v))] = p;
  out["registries"] = regs;
  out["feature_registry"] = to_string(feature_registry);
  out["llm"] = {{"models", llm_models}, {"prompts", llm_prompts}};
  out["subfactor_model"] = subfactor_model;
  out["embedding"] = {{"model_id", embedding.model_id},
                      {"dimension", embedding.dimension},
                      {"response_only", embedding.response_only}};
  ordered_json fams = ordered_json::array();
  for (auto f : feature_families) fams.push_back(to_string(f));
  out["feature_families"] = fams;
  ordered_json clfs = ordered_json::array();
  for (const auto& c : classifiers) {
    clfs.push_back(models::ClassifierSpec::make(c.family, c.hyperparameters).to_json()["hyperparameters"]);
    clfs.back() = ordered_json{{"family", to_string(c.family)}, {"hyperparameters", clfs.back()}};
  }
  out["classifiers"] = clfs;
  out["standardize"] = standardize;
  ordered_json rfe_fams = ordered_json::array();
  for (auto f : rfe.families) rfe_fams.push_back(to_string(f));
  out["rfe"] = {{"enabled", rfe.enabled},
                {"families", rfe_fams},
                {"selected_k", rfe.selected_k ? ordered_json(*rfe.selected_k) : ordered_json()},
                {"permutation_repeats", rfe.permutation_repeats}};
  ordered_json grid = ordered_json::array();
  for (const auto& g : finetune.grid) {
    grid.push_back({{"n_epochs", g.n_epochs}, {"learning_rate_multiplier", g.learning_rate_multiplier}});
  }
  out["finetune"] = {{"enabled", finetune.enabled},
                     {"provider", finetune.provider},
                     {"base_model_id", finetune.base_model_id},
                     {"grid", grid},
                     {"mock_polls", finetune.mock_polls},
                     {"mock_failing", finetune.mock_failing}};
  return out;
}

fs::path ExperimentConfig::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

fs::path ExperimentConfig::output_root() const {
  const fs::path root(output_dir);
  return backend.mode == llm::BackendMode::live ? root / "live" : root;
}

bool ExperimentConfig::needs_embeddings() const {
  return std::find(feature_families.begin(), feature_families.end(), FeatureFamily::embedding) !=
         feature_families.end();
}

bool ExperimentConfig::needs_subfactors() const {
  for (auto f : feature_families) {
    if (f == FeatureFamily::subfactor || f == FeatureFamily::combined) return true;
  }
  return rfe.enabled;
}

std::uint64_t stage_seed(std::uint64_t global_seed, std::string_view stage) {
  return hash64(std::string(stage) + ":" + std::to_string(global_seed));
}

// --- confusion -----------------------------------------------------------

ConfusionMatrix ConfusionMatrix::from(std::span<const std::optional<EmpathyLabel>> prediction,
                                      std::span<const EmpathyLabel> truth) {
  if (prediction.size() != truth.size()) {
    throw PreconditionError("confusion: " + std::to_string(prediction.size()) + " predictions for " +
                            std::to_string(truth.size()) + " labels");
  }
  ConfusionMatrix m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (prediction[i]) {
      ++m.counts[truth[i].index()][prediction[i]->index()];
    } else {
      ++m.failures;
    }
  }
  return m;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = failures;
  for (const auto& row : counts) {
    for (auto v : row) n += v;
  }
  return n;
}

std::size_t ConfusionMatrix::trace() const { return counts[0][0] + counts[1][1] + counts[2][2]; }

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  return n == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(n);
}

ordered_json ConfusionMatrix::to_json() const {
  ordered_json rows = ordered_json::array();
  for (const auto& row : counts) rows.push_back(row);
  return {{"counts", rows}, {"failures", failures}};
}

ordered_json EvaluationReport::to_json() const {
  ordered_json out;
  out["manifest"] = manifest;
  out["dataset"] = dataset;
  if (!llm_baselines.is_null()) out["llm_baselines"] = llm_baselines;
  if (!classifiers.is_null()) out["classifiers"] = classifiers;
  if (!rfe.is_null()) out["rfe"] = rfe;
  if (!importance.is_null()) out["importance"] = importance;
  if (!finetune.is_null()) out["finetune"] = finetune;
  out["summary"] = summary;
  return out;
}

// --- runner --------------------------------------------------------------

namespace {

ordered_json labels_json(std::span<const std::optional<EmpathyLabel>> labels) {
  ordered_json out = ordered_json::array();
  for (const auto& l : labels) out.push_back(l ? ordered_json(l->value()) : ordered_json());
  return out;
}

std::vector<EmpathyLabel> truth_of(std::span<const DialogueTriplet> records) {
  std::vector<EmpathyLabel> out;
  for (const auto& r : records) out.push_back(r.human_score);
  return out;
}

ordered_json counts_json(const ClassCounts& c) { return ordered_json::array({c[0], c[1], c[2]}); }

void write_json(const fs::path& path, const ordered_json& doc) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("corrupt JSON in " + path.string() + ": " + e.what());
  }
}

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

std::string accuracy_text(double a) { return text::fixed(a, 4); }

Runner::Runner(ExperimentConfig config, std::shared_ptr<llm::Transport> transport,
               std::shared_ptr<finetune::FinetuneProvider> provider)
    : config_(std::move(config)),
      out_(config_.output_root()),
      transport_(std::move(transport)),
      provider_(std::move(provider)) {}

llm::Gateway& Runner::gateway() {
  if (!gateway_) gateway_ = std::make_unique<llm::Gateway>(config_.backend, transport_);
  return *gateway_;
}

std::optional<llm::GatewayStats> Runner::gateway_stats() const {
  if (!gateway_) return std::nullopt;
  return gateway_->stats();
}

const MitiVocabulary& Runner::vocabulary() {
  if (!vocabulary_) {
    vocabulary_ = config_.miti_vocabulary ? MitiVocabulary::load(config_.resolve(*config_.miti_vocabulary))
                                          : MitiVocabulary::standard();
  }
  return *vocabulary_;
}

SubfactorRegistry Runner::registry(RegistryVersion version) {
  const auto it = config_.registries.find(version);
  if (it == config_.registries.end()) {
    throw PreconditionError("no registry configured for " + std::string(to_string(version)));
  }
  return load_registry(version, config_.resolve(it->second));
}

void Runner::write_result(const std::string& name, const ordered_json& doc) {
  write_json(out_ / "results" / (name + ".json"), doc);
}

std::optional<json> Runner::read_result(const std::string& name) const {
  const auto path = out_ / "results" / (name + ".json");
  if (!fs::exists(path)) return std::nullopt;
  return read_json(path);
}

void Runner::ingest() {
  stage("ingest", [&] {
    const auto path = config_.resolve(config_.dataset);
    const auto raw = load_corpus(path, vocabulary());
    ordered_json doc;
    doc["source"] = config_.dataset;
    doc["source_checksum"] = sha256_file(path);
    doc["records"] = raw.size();
    doc["class_counts"] = counts_json(raw.class_counts);
    write_json(out_ / "data" / "ingest.json", doc);
  });
}

void Runner::balance() {
  stage("balance", [&] {
    const auto raw = load_corpus(config_.resolve(config_.dataset), vocabulary());
    const auto balanced = empathy::balance(raw, stage_seed(config_.seed, "balance"));
    write_records_jsonl(out_ / "data" / "balanced.jsonl", balanced.records);
  });
}

void Runner::split() {
  stage("split", [&] {
    const auto path = config_.resolve(config_.dataset);
    const auto checksum = sha256_file(path);
    const auto raw = load_corpus(path, vocabulary());
    const auto balanced = empathy::balance(raw, stage_seed(config_.seed, "balance"));
    const auto parts = empathy::split(balanced, config_.split_ratio, stage_seed(config_.seed, "split"));
    const auto manifest = save_split(parts, out_ / "split", checksum);

    ordered_json doc;
    doc["source"] = config_.dataset;
    doc["source_checksum"] = checksum;
    doc["raw_class_counts"] = counts_json(raw.class_counts);
    doc["balanced_class_counts"] = counts_json(balanced.class_counts);
    doc["split_ratio"] = config_.split_ratio;
    doc["train_size"] = parts.train.size();
    doc["test_size"] = parts.test.size();
    doc["split_fingerprint"] = manifest.split_fingerprint;
    doc["train_checksum"] = manifest.train_checksum;
    doc["test_checksum"] = manifest.test_checksum;
    doc["warnings"] = parts.warnings;
    ordered_json test = ordered_json::array();
    for (const auto& t : parts.test) test.push_back({{"id", t.id}, {"label", t.human_score.value()}});
    doc["test_truth"] = test;
    write_result("dataset", doc);
  });
}

BalancedSplit Runner::load_split_checked() {
  if (!fs::exists(out_ / "split" / "split_manifest.json")) {
    throw PreconditionError("no split under " + (out_ / "split").string() + "; run the split stage first");
  }
  return load_split(out_ / "split", vocabulary());
}

void Runner::score_llm() {
  stage("score-llm", [&] {
    const auto parts = load_split_checked();
    const auto truth = truth_of(parts.test);
    ordered_json entries = ordered_json::array();
    for (const auto& model : config_.llm_models) {
      for (const auto& prompt : config_.llm_prompts) {
        llm::PromptOptions options;
        options.model_id = model;
        std::vector<llm::ChatRequest> requests;
        std::optional<SubfactorRegistry> reg;
        if (prompt != "naive") reg = registry(parse_registry_version(prompt.substr(10)));
        for (const auto& t : parts.test) {
          requests.push_back(reg ? llm::build_subfactor_enhanced_prompt(t, *reg, options)
                                 : llm::build_naive_prompt(t, options));
        }
        const auto outcomes = llm::score_empathy_batch(gateway(), requests);
        std::vector<std::optional<EmpathyLabel>> predicted;
        int attempts = 0;
        for (const auto& o : outcomes) {
          predicted.push_back(o.label);
          attempts += o.attempts;
        }
        const auto confusion = ConfusionMatrix::from(predicted, truth);
        const double acc = models::accuracy(predicted, truth);
        ordered_json e;
        e["model"] = model;
        e["prompt"] = prompt;
        if (reg) e["registry_hash"] = reg->content_hash();
        e["accuracy"] = acc;
        e["accuracy_text"] = accuracy_text(acc);
        e["correct"] = confusion.trace();
        e["total"] = truth.size();
        e["failures"] = confusion.failures;
        e["attempts"] = attempts;
        e["confusion"] = confusion.to_json();
        e["predictions"] = labels_json(predicted);
        entries.push_back(std::move(e));
      }
    }
    write_result("llm_baselines", {{"entries", entries}});
  });
}

void Runner::embed() {
  stage("embed", [&] {
    const auto parts = load_split_checked();
    std::vector<DialogueTriplet> records = parts.train;
    records.insert(records.end(), parts.test.begin(), parts.test.end());
    const auto vectors = embed_records(records, gateway(), config_.embedding);
    ordered_json doc;
    doc["model_id"] = config_.embedding.model_id;
    doc["dimension"] = config_.embedding.dimension;
    ordered_json by_id = ordered_json::object();
    for (const auto& t : records) by_id[t.id] = vectors.at(t.id).values;
    doc["vectors"] = by_id;
    write_json(out_ / "features" / "embeddings.json", doc);
  });
}

SubfactorRegistry Runner::elicit_subfactors(int rounds, std::size_t sample_size, RegistryVersion version) {
  return stage("elicit-subfactors", [&] {
    const auto parts = load_split_checked();
    const auto n = std::min(sample_size, parts.train.size());
    const std::span<const DialogueTriplet> sample(parts.train.data(), n);
    const auto result = elicit_candidates(gateway(), sample, rounds);
    auto reg = select_recurring(
        result.sets, SubfactorRegistry::kPerDimension, version,
        "elicited over " + std::to_string(result.sets.size()) + " of " + std::to_string(rounds) + " rounds");
    save_registry(reg, out_ / "registries" / (text::to_lower(to_string(version)) + ".json"));
    return reg;
  });
}

void Runner::score_subfactors() {
  stage("score-subfactors", [&] {
    const auto parts = load_split_checked();
    const auto reg = registry(config_.feature_registry);
    std::vector<DialogueTriplet> records = parts.train;
    records.insert(records.end(), parts.test.begin(), parts.test.end());
    llm::PromptOptions options;
    options.model_id = config_.subfactor_model;
    std::vector<llm::ChatRequest> requests;
    for (const auto& t : records) requests.push_back(llm::build_subfactor_scoring_prompt(t, reg, options));
    const auto outcomes = llm::score_subfactors_batch(gateway(), requests, reg);

    ordered_json scores = ordered_json::object(), failures = ordered_json::object(),
                 warnings = ordered_json::object();
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& o = outcomes[i];
      if (o.scores) {
        scores[records[i].id] = o.scores->values;
      } else {
        failures[records[i].id] = o.error;
      }
      if (!o.warnings.empty()) warnings[records[i].id] = o.warnings;
    }
    ordered_json doc;
    doc["registry_version"] = to_string(reg.version());
    doc["registry_hash"] = reg.content_hash();
    doc["model_id"] = config_.subfactor_model;
    doc["scores"] = scores;
    doc["failures"] = failures;
    doc["warnings"] = warnings;
    write_json(out_ / "features" / "subfactor_scores.json", doc);
  });
}

std::pair<FeatureMatrix, FeatureMatrix> Runner::matrices(FeatureFamily family, const BalancedSplit& parts,
                                                         ordered_json& notes) {
  FeatureSources sources;
  sources.vocabulary = &vocabulary();
  std::optional<SubfactorRegistry> reg;
  if (family == FeatureFamily::subfactor || family == FeatureFamily::combined) {
    const auto path = out_ / "features" / "subfactor_scores.json";
    if (!fs::exists(path)) throw PreconditionError("no subfactor scores; run score-subfactors first");
    reg = registry(config_.feature_registry);
    const auto doc = read_json(path);
    if (doc.at("registry_hash").get<std::string>() != reg->content_hash()) {
      throw DataError("subfactor scores were produced with a different registry; rerun score-subfactors");
    }
    for (const auto& [id, values] : doc.at("scores").items()) {
      sources.subfactors[id] = SubfactorVector{values.get<std::vector<int>>()};
    }
    sources.registry = &*reg;
  }
  if (family == FeatureFamily::embedding) {
    const auto path = out_ / "features" / "embeddings.json";
    if (!fs::exists(path)) throw PreconditionError("no embeddings; run embed first");
    const auto doc = read_json(path);
    const auto model = doc.at("model_id").get<std::string>();
    for (const auto& [id, values] : doc.at("vectors").items()) {
      sources.embeddings[id] = EmbeddingVector{values.get<std::vector<double>>(), model};
    }
  }

  auto available = [&](const DialogueTriplet& t) {
    if (sources.registry && !sources.subfactors.contains(t.id)) return false;
    if (family == FeatureFamily::embedding && !sources.embeddings.contains(t.id)) return false;
    return true;
  };
  std::vector<DialogueTriplet> train, test;
  ordered_json dropped = ordered_json::array();
  for (const auto& t : parts.train) (available(t) ? train.push_back(t) : dropped.push_back(t.id));
  for (const auto& t : parts.test) (available(t) ? test.push_back(t) : dropped.push_back(t.id));

  auto train_m = assemble_matrix(train, family, sources);
  auto test_m = assemble_matrix(test, family, sources);
  const auto name = std::string(to_string(family));
  const auto train_path = out_ / "features" / (name + "_train.csv");
  const auto test_path = out_ / "features" / (name + "_test.csv");
  fs::create_directories(train_path.parent_path());
  write_feature_store(train_path, train_m);
  write_feature_store(test_path, test_m);

  notes["features"] = name;
  notes["columns"] = train_m.cols();
  notes["train_rows"] = train_m.rows();
  notes["test_rows"] = test_m.rows();
  notes["dropped_records"] = dropped;
  notes["feature_stores"] = {{train_path.filename().string(), sha256_file(train_path)},
                             {test_path.filename().string(), sha256_file(test_path)}};
  if (reg) notes["registry_hash"] = reg->content_hash();
  if (config_.standardize) {
    auto [train_s, stats] = standardize(train_m);
    auto [test_s, unused] = standardize(test_m, stats);
    notes["standardization"] = stats.fingerprint();
    return {std::move(train_s), std::move(test_s)};
  }
  return {std::move(train_m), std::move(test_m)};
}

models::ClassifierSpec Runner::spec_for(FeatureFamily family, const ClassifierEntry& entry) const {
  return models::ClassifierSpec::make(
      entry.family, entry.hyperparameters,
      stage_seed(config_.seed, "classifier:" + std::string(to_string(family)) + ":" +
                                   std::string(models::to_string(entry.family))));
}

void Runner::train() {
  stage("train", [&] {
    const auto parts = load_split_checked();
    ordered_json families = ordered_json::array(), results = ordered_json::array();
    for (auto family : config_.feature_families) {
      ordered_json notes;
      const auto [tr, te] = matrices(family, parts, notes);
      families.push_back(notes);
      for (const auto& entry : config_.classifiers) {
        const auto spec = spec_for(family, entry);
        const auto model = models::train(spec, tr);
        const auto prediction = models::predict(model, te);
        const auto confusion = ConfusionMatrix::from(prediction.labels, te.labels);
        const double acc = models::accuracy(prediction, te.labels);
        const auto name = std::string(to_string(family)) + "_" + spec.name();
        models::save_model(model, out_ / "models" / (name + ".json"));

        ordered_json e;
        e["features"] = to_string(family);
        e["classifier"] = spec.name();
        e["seed"] = spec.seed;
        e["accuracy"] = acc;
        e["accuracy_text"] = accuracy_text(acc);
        e["correct"] = confusion.trace();
        e["total"] = te.rows();
        e["confusion"] = confusion.to_json();
        e["model_fingerprint"] = model.fingerprint();
        e["warnings"] = model.warnings;
        e["record_ids"] = te.record_ids;
        e["predictions"] = labels_json(prediction.labels);
        results.push_back(std::move(e));
      }
    }
    write_result("classifiers", {{"feature_sets", families}, {"results", results}});
  });
}

void Runner::rfe() {
  stage("rfe", [&] {
    const auto parts = load_split_checked();
    ordered_json notes;
    const auto [tr, te] = matrices(FeatureFamily::combined, parts, notes);
    auto families = config_.rfe.families;
    if (families.empty()) {
      for (const auto& c : config_.classifiers) families.push_back(c.family);
    }
    const auto split_fp = fingerprint(parts);
    ordered_json curves = ordered_json::array();
    std::vector<selector::ModelSelection> selections;
    for (auto family : families) {
      ClassifierEntry entry{family};
      for (const auto& c : config_.classifiers) {
        if (c.family == family) {
          entry = c;
          break;
        }
      }
      const auto spec = spec_for(FeatureFamily::combined, entry);
      const auto ranking = selector::rfe_rank(spec, tr, {config_.rfe.permutation_repeats});
      const auto curve = selector::sweep(spec, ranking, tr, te, split_fp);
      const std::size_t k = std::min(config_.rfe.selected_k.value_or(curve.best_k), tr.cols());
      selections.push_back({spec.name(), ranking, k});

      ordered_json c;
      c["classifier"] = spec.name();
      c["seed"] = spec.seed;
      c["importance_method"] = ranking.method == models::ImportanceMethod::intrinsic ? "intrinsic" : "permutation";
      c["schema"] = ranking.schema;
      c["ranks"] = ranking.ranks;
      c["importance"] = ranking.importance;
      c["elimination_order"] = ranking.elimination_order;
      ordered_json points = ordered_json::array();
      for (const auto& p : curve.points) {
        points.push_back({{"k", p.k}, {"accuracy", p.accuracy}, {"accuracy_text", accuracy_text(p.accuracy)}});
      }
      c["sweep"] = points;
      c["best_k"] = curve.best_k;
      c["best_accuracy"] = curve.best_accuracy;
      c["best_accuracy_text"] = accuracy_text(curve.best_accuracy);
      c["selected_k"] = k;
      c["selected_features"] = selector::select_k(ranking, k);
      curves.push_back(std::move(c));
    }
    const auto table = selector::importance_report(selections);
    ordered_json rows = ordered_json::array();
    for (const auto& row : table.rows) {
      ordered_json r;
      r["feature"] = row.feature;
      ordered_json entries = ordered_json::array();
      for (const auto& e : row.entries) {
        entries.push_back({{"model", e.model}, {"rank", e.rank}, {"importance", e.importance}, {"selected", e.selected}});
      }
      r["models"] = entries;
      rows.push_back(std::move(r));
    }
    write_result("rfe", {{"split_fingerprint", split_fp}, {"feature_set", notes}, {"curves", curves},
                         {"importance", rows}});
  });
}

void Runner::finetune() {
  stage("finetune", [&] {
    const auto parts = load_split_checked();
    const auto file = finetune::export_training_file(parts);
    fs::create_directories(out_ / "finetune");
    {
      std::ofstream out(out_ / "finetune" / "training.jsonl", std::ios::binary);
      out << file.content;
    }
    auto provider = provider_;
    const bool mock = config_.finetune.provider == "mock";
    if (!provider) {
      if (mock) {
        provider = std::make_shared<finetune::MockFinetuneProvider>(
            config_.finetune.mock_polls,
            std::set<std::string>(config_.finetune.mock_failing.begin(), config_.finetune.mock_failing.end()));
      } else {
        provider = std::make_shared<finetune::HttpFinetuneProvider>(llm::HttpEndpoint{
            config_.backend.base_url, llm::api_key_from_env(config_.backend.api_key_env), config_.backend.timeout_s});
      }
    }
    finetune::JobTracker tracker(provider);
    finetune::PollOptions poll;
    poll.interval = std::chrono::milliseconds(config_.finetune.poll_interval_ms);
    poll.jitter = std::chrono::milliseconds(config_.finetune.poll_jitter_ms);
    poll.jitter_seed = stage_seed(config_.seed, "finetune-poll");
    if (mock) tracker.set_sleeper([](std::chrono::milliseconds) {});

    const auto result = finetune::run_grid(file, config_.finetune.grid, config_.finetune.base_model_id, tracker,
                                           parts.test, gateway(), poll);
    finetune::save_ledger(out_ / "finetune" / "ledger.json", result);

    const auto truth = truth_of(parts.test);
    ordered_json jobs = ordered_json::array();
    for (const auto& e : result.entries) {
      ordered_json j;
      j["label"] = e.spec.label();
      j["n_epochs"] = e.spec.n_epochs;
      j["learning_rate_multiplier"] = e.spec.learning_rate_multiplier;
      j["job_id"] = e.job_id;
      j["state"] = finetune::to_string(e.status.state);
      j["fine_tuned_model_id"] =
          e.status.fine_tuned_model_id ? ordered_json(*e.status.fine_tuned_model_id) : ordered_json();
      j["message"] = e.status.message;
      if (e.accuracy) {
        j["accuracy"] = *e.accuracy;
        j["accuracy_text"] = accuracy_text(*e.accuracy);
        j["confusion"] = ConfusionMatrix::from(e.predictions, truth).to_json();
        j["predictions"] = labels_json(e.predictions);
      } else {
        j["accuracy"] = nullptr;
      }
      jobs.push_back(std::move(j));
    }
    write_result("finetune", {{"base_model_id", config_.finetune.base_model_id},
                              {"training_file_fingerprint", file.fingerprint},
                              {"examples", file.examples},
                              {"jobs", jobs}});
  });
}

namespace {

ordered_json best_of(const ordered_json& entries, const std::string& filter_key, const std::string& filter_value,
                     const std::string& accuracy_key, const std::vector<std::string>& keep) {
  ordered_json best;
  for (const auto& e : entries) {
    if (!filter_key.empty() && e.value(filter_key, std::string()) != filter_value) continue;
    if (!e.contains(accuracy_key) || !e[accuracy_key].is_number()) continue;
    if (best.is_null() || e[accuracy_key].get<double>() > best["accuracy"].get<double>()) {
      best = ordered_json::object();
      for (const auto& k : keep) best[k] = e.at(k);
      best["accuracy"] = e[accuracy_key];
      best["accuracy_text"] = accuracy_text(e[accuracy_key].get<double>());
    }
  }
  return best;
}

}  // namespace

EvaluationReport Runner::report() {
  return stage("report", [&] {
    EvaluationReport r;
    const auto dataset = read_result("dataset");
    if (!dataset) throw PreconditionError("no dataset result; run split first");
    r.dataset = ordered_json::parse(dataset->dump());
    auto load = [&](const std::string& name) {
      const auto doc = read_result(name);
      return doc ? ordered_json::parse(doc->dump()) : ordered_json();
    };
    r.llm_baselines = load("llm_baselines");
    r.classifiers = load("classifiers");
    const auto rfe_doc = load("rfe");
    if (!rfe_doc.is_null()) {
      r.rfe = {{"split_fingerprint", rfe_doc["split_fingerprint"]},
               {"feature_set", rfe_doc["feature_set"]},
               {"curves", rfe_doc["curves"]}};
      r.importance = rfe_doc["importance"];
    }
    r.finetune = load("finetune");

    ordered_json m;
    m["config"] = config_.to_json();
    ordered_json seeds;
    seeds["global"] = config_.seed;
    seeds["balance"] = stage_seed(config_.seed, "balance");
    seeds["split"] = stage_seed(config_.seed, "split");
    m["stage_seeds"] = seeds;
    m["dataset_checksum"] = r.dataset["source_checksum"];
    m["split_fingerprint"] = r.dataset["split_fingerprint"];
    m["train_checksum"] = r.dataset["train_checksum"];
    m["test_checksum"] = r.dataset["test_checksum"];
    m["miti_vocabulary"] = text::join(vocabulary().codes(), "|");
    ordered_json regs = ordered_json::object();
    for (const auto& [version, path] : config_.registries) {
      const auto full = config_.resolve(path);
      if (fs::exists(full)) regs[std::string(to_string(version))] = load_registry(version, full).content_hash();
    }
    m["registry_hashes"] = regs;
    ordered_json stores = ordered_json::object();
    if (fs::exists(out_ / "features")) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(out_ / "features")) files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) stores[f.filename().string()] = sha256_file(f);
    }
    m["feature_stores"] = stores;
    ordered_json fingerprints = ordered_json::object();
    if (!r.classifiers.is_null()) {
      for (const auto& e : r.classifiers["results"]) {
        fingerprints[e["features"].get<std::string>() + "_" + e["classifier"].get<std::string>()] =
            e["model_fingerprint"];
      }
    }
    m["model_fingerprints"] = fingerprints;
    ordered_json ids;
    ids["llm"] = config_.llm_models;
    ids["subfactor_scoring"] = config_.subfactor_model;
    ids["embedding"] = config_.embedding.model_id;
    if (!r.finetune.is_null()) {
      ordered_json ft = ordered_json::array();
      for (const auto& j : r.finetune["jobs"]) ft.push_back(j["fine_tuned_model_id"]);
      ids["fine_tuned"] = ft;
      m["finetune_training_file"] = r.finetune["training_file_fingerprint"];
    }
    m["model_ids"] = ids;
    r.manifest = m;

    ordered_json s;
    if (!r.llm_baselines.is_null()) {
      s["naive_baseline_best"] = best_of(r.llm_baselines["entries"], "prompt", "naive", "accuracy", {"model"});
      s["llm_prompt_best"] = best_of(r.llm_baselines["entries"], "", "", "accuracy", {"model", "prompt"});
    }
    if (!r.classifiers.is_null()) {
      for (auto family : config_.feature_families) {
        const auto name = std::string(to_string(family));
        s[name + "_best"] = best_of(r.classifiers["results"], "features", name, "accuracy", {"classifier"});
      }
    }
    if (!r.rfe.is_null()) {
      s["combined_rfe_best"] = best_of(r.rfe["curves"], "", "", "best_accuracy", {"classifier", "best_k"});
    }
    if (!r.finetune.is_null()) {
      s["finetune_best"] =
          best_of(r.finetune["jobs"], "state", "succeeded", "accuracy", {"n_epochs", "learning_rate_multiplier"});
    }
    r.summary = s;
    emit_report(r, out_ / "report", {config_.plot});
    return r;
  });
}

EvaluationReport Runner::run_all() {
  ingest();
  balance();
  split();
  if (!config_.llm_models.empty() && !config_.llm_prompts.empty()) score_llm();
  if (config_.needs_embeddings()) embed();
  if (config_.needs_subfactors()) score_subfactors();
  if (!config_.feature_families.empty()) train();
  if (config_.rfe.enabled) rfe();
  if (config_.finetune.enabled) finetune();
  return report();
}

EvaluationReport run_experiment(const ExperimentConfig& config) { return Runner(config).run_all(); }

}  // namespace empathy::bench
