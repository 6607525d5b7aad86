// Regenerates the mini-corpus fixtures, the shipped V1/V2 registries and the
// golden report from the synthetic judge.
//
//   fixture_gen <repo root>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "empathy/experiment.hpp"
#include "synthetic_llm.hpp"

namespace fs = std::filesystem;
using namespace empathy;

namespace {

nlohmann::json read(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

void freeze_registry(bench::Runner& runner, RegistryVersion version, int rounds, const fs::path& dest) {
  const auto reg = runner.elicit_subfactors(rounds, 12, version);
  const SubfactorRegistry frozen(version, reg.subfactors(),
                                 "Regenerated with elicit_candidates over " + std::to_string(rounds) +
                                     (rounds == 1 ? " round" : " rounds") +
                                     " against the synthetic judge in tools/synthetic_llm.cpp.");
  save_registry(frozen, dest);
  std::cout << "wrote " << dest << " (" << frozen.content_hash().substr(0, 12) << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = fs::absolute(argc > 1 ? fs::path(argv[1]) : fs::current_path());
  const auto mini = root / "data" / "mini";
  const auto fixtures = mini / "fixtures";
  const auto scratch = fs::temp_directory_path() / "empathy_fixture_gen";
  fs::remove_all(scratch);
  fs::remove_all(fixtures);
  fs::create_directories(fixtures);

  try {
    auto doc = read(mini / "config.json");
    const auto corpus = load_corpus(mini / doc["dataset"].get<std::string>());
    auto judge = std::make_shared<tools::SyntheticLlm>(corpus.records);

    // Record every exchange into the fixture directory through a live gateway.
    auto live_doc = doc;
    live_doc["backend"] = {{"mode", "live"}, {"cache_dir", fixtures.string()}, {"requests_per_minute", 1e9}};
    live_doc["output_dir"] = (scratch / "record").string();
    const auto live_config = bench::ExperimentConfig::from_json(live_doc, mini);
    {
      bench::Runner runner(live_config, judge);
      runner.split();
      freeze_registry(runner, RegistryVersion::V1, 1, root / "data" / "registries" / "v1.json");
      freeze_registry(runner, RegistryVersion::V2, 10, root / "data" / "registries" / "v2.json");
    }
    bench::Runner(live_config, judge).run_all();

    // Replay in mock mode; the result is the golden report.
    doc["output_dir"] = (scratch / "replay").string();
    const auto mock_config = bench::ExperimentConfig::from_json(doc, mini);
    bench::Runner replay(mock_config);
    replay.run_all();
    const auto golden = mini / "golden";
    fs::remove_all(golden);
    fs::create_directories(golden);
    for (const auto& entry : fs::directory_iterator(replay.out_dir() / "report")) {
      fs::copy_file(entry.path(), golden / entry.path().filename());
    }
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(fixtures)) ++n;
    std::cout << "wrote " << n << " fixtures and the golden report under " << mini << "\n";
  } catch (const std::exception& e) {
    std::cerr << "fixture_gen: " << e.what() << "\n";
    return 1;
  }
  fs::remove_all(scratch);
  return 0;
}
