#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "empathy/experiment.hpp"
#include "empathy/text.hpp"

using namespace empathy;
using nlohmann::json;

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool offline = false;
  bool live = false;
  std::string cache_dir;
  std::string out;
  bool plot = false;
};

bench::ExperimentConfig load_config(const GlobalFlags& flags) {
  if (flags.config.empty()) throw PreconditionError("--config is required");
  std::ifstream in(flags.config);
  if (!in) throw PreconditionError("cannot read config " + flags.config);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw PreconditionError("config " + flags.config + " is not valid JSON: " + e.what());
  }
  if (flags.seed) doc["seed"] = *flags.seed;
  auto& backend = doc["backend"];
  if (!backend.is_object()) backend = json::object();
  if (flags.live) backend["mode"] = "live";
  if (flags.offline && backend.value("mode", "offline") == "live") backend["mode"] = "offline";
  // Flag paths are relative to the working directory, config paths to the config file.
  if (!flags.cache_dir.empty()) backend["cache_dir"] = std::filesystem::absolute(flags.cache_dir).string();
  if (!flags.out.empty()) doc["output_dir"] = flags.out;
  if (flags.plot) doc["plot"] = true;
  const std::filesystem::path path(flags.config);
  return bench::ExperimentConfig::from_json(doc, path.has_parent_path() ? path.parent_path() : ".");
}

void print_summary(const bench::EvaluationReport& report, const std::filesystem::path& out) {
  std::cout << "report written to " << (out / "report").string() << "\n";
  for (const auto& [section, best] : report.summary.items()) {
    if (best.is_null()) continue;
    std::string detail;
    for (const auto& [k, v] : best.items()) {
      if (k == "accuracy" || k == "accuracy_text") continue;
      detail += " " + k + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
    }
    std::cout << "  " << section << ": " << best["accuracy_text"].get<std::string>() << detail << "\n";
  }
}

void print_stats(const bench::Runner& runner) {
  if (const auto s = runner.gateway_stats()) {
    std::cerr << "gateway: live=" << s->live_calls << " cache=" << s->cache_hits << " mock=" << s->mock_hits
              << " retries=" << s->retries << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Empathy-scoring experiment runner.\n\n"
      "run-all executes: ingest, balance, split, score-llm, embed, score-subfactors, train, rfe, finetune, report.\n"
      "Stages persist results under the output directory so each can be re-run on its own."};
  app.require_subcommand(1);
  GlobalFlags flags;
  app.add_option("--config", flags.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "Override the global seed");
  auto* offline = app.add_flag("--offline", flags.offline, "Never call the provider; a live config becomes cache-only");
  app.add_flag("--live", flags.live, "Call the provider; credentials come from the configured environment variable")
      ->excludes(offline);
  app.add_option("--cache-dir", flags.cache_dir, "Response cache directory");
  app.add_option("--out", flags.out, "Output directory");
  app.add_flag("--plot", flags.plot, "Also write SVG plots");

  int rounds = 10;
  std::size_t sample_size = 40;
  std::string version = "custom";

  struct Stage {
    const char* name;
    const char* help;
  };
  const Stage stages[] = {
      {"ingest", "Load and validate the dataset"},
      {"balance", "Undersample every class to the minority count"},
      {"split", "Stratified train/test split"},
      {"score-llm", "Score the test split with the configured LLMs and prompts"},
      {"embed", "Embed every record"},
      {"elicit-subfactors", "Elicit a subfactor registry from the training split"},
      {"score-subfactors", "Score every record on the feature registry's subfactors"},
      {"train", "Train every classifier on every feature family"},
      {"rfe", "Recursive feature elimination and accuracy-vs-k sweep on combined features"},
      {"finetune", "Export the training file, run the fine-tune grid and evaluate"},
      {"report", "Assemble and emit the report from persisted stage results"},
      {"run-all", "Every configured stage in order, then the report"},
  };
  for (const auto& s : stages) {
    auto* sub = app.add_subcommand(s.name, s.help);
    if (std::string(s.name) == "elicit-subfactors") {
      sub->add_option("--rounds", rounds, "Elicitation rounds")->check(CLI::PositiveNumber);
      sub->add_option("--sample-size", sample_size, "Training dialogues shown per round")->check(CLI::PositiveNumber);
      sub->add_option("--version", version, "Version tag of the written registry (V1, V2, custom)");
    }
  }
  CLI11_PARSE(app, argc, argv);

  const auto command = app.get_subcommands().front()->get_name();
  try {
    bench::Runner runner(load_config(flags));
    if (command == "ingest") {
      runner.ingest();
    } else if (command == "balance") {
      runner.balance();
    } else if (command == "split") {
      runner.split();
    } else if (command == "score-llm") {
      runner.score_llm();
    } else if (command == "embed") {
      runner.embed();
    } else if (command == "elicit-subfactors") {
      const auto reg = runner.elicit_subfactors(rounds, sample_size, parse_registry_version(version));
      std::cout << "registry " << to_string(reg.version()) << " " << reg.content_hash() << "\n";
      for (const auto& sf : reg.subfactors()) std::cout << "  " << to_string(sf.dimension) << ": " << sf.name << "\n";
    } else if (command == "score-subfactors") {
      runner.score_subfactors();
    } else if (command == "train") {
      runner.train();
    } else if (command == "rfe") {
      runner.rfe();
    } else if (command == "finetune") {
      runner.finetune();
    } else if (command == "report") {
      print_summary(runner.report(), runner.out_dir());
    } else if (command == "run-all") {
      print_summary(runner.run_all(), runner.out_dir());
    }
    print_stats(runner);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
