// Offline acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "empathy/experiment.hpp"
#include "empathy/llm/parse.hpp"
#include "empathy/selector.hpp"
#include "test_support.hpp"

using namespace empathy;
using namespace empathy::models;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  if (!o.pass) ++failures;
  std::printf("%s %d %s%s%s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.empty() ? "" : " -- ",
              o.detail.c_str());
  std::fflush(stdout);
}

// 1 -------------------------------------------------------------------------

Outcome balancing_and_split() {
  Outcome o;
  const auto raw = testing::corpus_with_counts(640, 1811, 3549);
  const auto balanced = balance(raw, 1);
  o.require(balanced.class_counts == ClassCounts{640, 640, 640}, "balance is not 640 per class");
  std::set<std::string> raw_ids;
  for (const auto& r : raw.records) raw_ids.insert(r.id);
  std::set<std::string> balanced_ids;
  for (const auto& r : balanced.records) balanced_ids.insert(r.id);
  o.require(balanced_ids.size() == 1920, "balanced ids are not unique");
  o.require(std::includes(raw_ids.begin(), raw_ids.end(), balanced_ids.begin(), balanced_ids.end()),
            "balanced records not drawn from the source");
  // Every class-1 record survives since it is the minority.
  o.require(static_cast<std::size_t>(std::count_if(balanced.records.begin(), balanced.records.end(),
                                                   [](const auto& r) { return r.human_score.value() == 1; })) == 640,
            "minority class altered");

  const auto parts = split(balanced, 0.8, 2);
  o.require(parts.train.size() == 1536 && parts.test.size() == 384, "split sizes are not 1536/384");
  o.require(count_classes(parts.train) == ClassCounts{512, 512, 512}, "train is not stratified 512/class");
  o.require(count_classes(parts.test) == ClassCounts{128, 128, 128}, "test is not stratified 128/class");
  std::set<std::string> train_ids, test_ids;
  for (const auto& r : parts.train) train_ids.insert(r.id);
  for (const auto& r : parts.test) test_ids.insert(r.id);
  std::vector<std::string> overlap;
  std::set_intersection(train_ids.begin(), train_ids.end(), test_ids.begin(), test_ids.end(),
                        std::back_inserter(overlap));
  o.require(overlap.empty(), "train and test overlap");
  std::set<std::string> all = train_ids;
  all.insert(test_ids.begin(), test_ids.end());
  o.require(all == balanced_ids, "split does not cover the balanced set");
  return o;
}

// 2 -------------------------------------------------------------------------

Outcome parser_suite() {
  Outcome o;
  const std::pair<const char*, int> phrasings[] = {
      {"3", 3},
      {"2\n", 2},
      {"  1  ", 1},
      {"Score: 2", 2},
      {"**Score:** 3", 3},
      {"I would rate this response a 2.", 2},
      {"The score is 3 out of 3.", 3},
      {"Rating: 1/3", 1},
      {"Score = 3", 3},
      {"(2)", 2},
      {"[3]", 3},
      {"`1`", 1},
      {"{\"score\": 2}", 2},
      {"Final answer: 1", 1},
      {"3 - good empathetic response", 3},
      {"Empathy score: 2 (okay)", 2},
      {"This is a bad empathetic response. Score: 1", 1},
      {"```\n3\n```", 3},
      {"score 2/3", 2},
      {"1.", 1},
      {"Answer: \"3\"", 3},
      {"Score:\n\n2", 2},
  };
  std::set<int> seen;
  for (const auto& [text, expected] : phrasings) {
    const auto got = llm::try_parse_empathy_score(text);
    o.require(got && got->value() == expected, std::string("phrasing not parsed: ") + text);
    if (got) seen.insert(got->value());
  }
  o.require(std::size(phrasings) >= 20, "fewer than 20 phrasings");
  for (int v = 1; v <= 3; ++v) {
    o.require(llm::parse_empathy_score(std::to_string(EmpathyLabel::from_int(v).value())).value() == v,
              "label does not round-trip");
  }
  o.require(seen == std::set<int>{1, 2, 3}, "not every label produced");
  for (const char* bad : {"", "no idea", "4", "0", "2.5", "-2", "abc3"}) {
    o.require(!llm::try_parse_empathy_score(bad), std::string("accepted: '") + bad + "'");
  }

  std::vector<SubfactorDefinition> defs;
  for (int i = 0; i < 15; ++i) defs.push_back({"Factor " + std::to_string(i), "d", kDimensions[i / 5]});
  const SubfactorRegistry reg(RegistryVersion::custom, defs);
  nlohmann::ordered_json full;
  for (int i = 0; i < 15; ++i) full["Factor " + std::to_string(i)] = i % 10 + 1;
  const auto ok = llm::parse_subfactor_scores("```json\n" + full.dump() + "\n```", reg);
  o.require(ok.scores.values.size() == 15 && ok.warnings.empty(), "15-key object rejected");
  for (int i = 0; i < 15; ++i) o.require(ok.scores.values[i] == i % 10 + 1, "scores out of registry order");

  auto clamped = full;
  clamped["Factor 0"] = 14;
  clamped["Factor 1"] = -2;
  const auto c = llm::parse_subfactor_scores(clamped.dump(), reg);
  o.require(c.scores.values[0] == 10 && c.scores.values[1] == 1, "values not clamped to [1,10]");
  o.require(c.warnings.size() == 2, "clamping not reported");

  auto short_obj = full;
  short_obj.erase("Factor 14");
  bool rejected = false;
  try {
    llm::parse_subfactor_scores(short_obj.dump(), reg);
  } catch (const llm::ParseError&) {
    rejected = true;
  }
  o.require(rejected, "14-key object accepted");
  return o;
}

// 3 -------------------------------------------------------------------------

bool perceptron_separates(const FeatureMatrix& m) {
  const std::size_t d = m.cols() + 1;
  std::vector<std::vector<double>> w(3, std::vector<double>(d, 0.0));
  for (int epoch = 0; epoch < 1000; ++epoch) {
    int errors = 0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      auto score = [&](int c) {
        double s = w[c][d - 1];
        for (std::size_t j = 0; j + 1 < d; ++j) s += w[c][j] * m.values(i, j);
        return s;
      };
      const int truth = m.labels[i].index();
      int rival = (truth + 1) % 3;
      if (score((truth + 2) % 3) > score(rival)) rival = (truth + 2) % 3;
      if (score(truth) <= score(rival)) {
        ++errors;
        for (std::size_t j = 0; j + 1 < d; ++j) {
          w[truth][j] += m.values(i, j);
          w[rival][j] -= m.values(i, j);
        }
        w[truth][d - 1] += 1.0;
        w[rival][d - 1] -= 1.0;
      }
    }
    if (errors == 0) return true;
  }
  return false;
}

double fit_score(const ClassifierSpec& spec, const FeatureMatrix& train_m, const FeatureMatrix& test_m) {
  return accuracy(predict(train(spec, train_m), test_m), test_m.labels);
}

Outcome classifier_oracles() {
  Outcome o;
  {
    Rng rng(5);
    Matrix x(150, 4);
    std::vector<int> y(150);
    for (std::size_t i = 0; i < 150; ++i) {
      for (std::size_t j = 0; j < 4; ++j) x(i, j) = rng.normal();
      y[i] = static_cast<int>(rng.below(3));
    }
    const auto m = testing::to_features(x, y);
    o.require(fit_score(ClassifierSpec::make(ClassifierFamily::DT, {}, 1), m, m) == 1.0, "DT training accuracy < 1");
  }
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto m = testing::blobs(50, 4, 6.0, 0.6, seed);
    if (!perceptron_separates(m)) {
      o.require(false, "blob set not certified separable");
      continue;
    }
    o.require(fit_score(ClassifierSpec::make(ClassifierFamily::LR, {{"C", 100.0}}, seed), m, m) == 1.0,
              "LR below 1.0 on separable blobs");
    o.require(fit_score(ClassifierSpec::make(ClassifierFamily::SVC, {}, seed), m, m) == 1.0,
              "SVC below 1.0 on separable blobs");
  }
  // Labels are permuted across the whole set before splitting, so features
  // carry no label information on either side.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto all = testing::blobs(400, 4, 3.0, 1.0, 100 + seed);
    Rng rng(seed);
    rng.shuffle(std::span<EmpathyLabel>(all.labels));
    std::vector<std::size_t> even, odd;
    for (std::size_t i = 0; i < all.rows(); ++i) (i % 2 ? odd : even).push_back(i);
    const auto tr = testing::take_rows(all, even);
    const auto te = testing::take_rows(all, odd);
    for (auto f : {ClassifierFamily::LR, ClassifierFamily::SVC, ClassifierFamily::DT}) {
      const double acc = fit_score(ClassifierSpec::make(f, {}, seed), tr, te);
      std::ostringstream msg;
      msg << to_string(f) << " shuffled-label accuracy " << acc << " for seed " << seed;
      o.require(std::abs(acc - 1.0 / 3.0) <= 0.08, msg.str());
    }
  }
  return o;
}

// 4, 8 ---------------------------------------------------------------------

std::map<std::string, std::string> directory_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = testing::slurp(e.path());
  }
  return out;
}

bench::EvaluationReport run_mini(const fs::path& out) {
  auto config = bench::ExperimentConfig::load(testing::kSourceDir / "data/mini/config.json");
  config.output_dir = out.string();
  return bench::Runner(config).run_all();
}

struct MiniRuns {
  testing::TempDir dir;
  std::optional<bench::EvaluationReport> first;
  std::string error;

  MiniRuns() {
    try {
      first = run_mini(dir / "first");
      run_mini(dir / "second");
    } catch (const std::exception& e) {
      error = e.what();
    }
  }
};

Outcome determinism(const MiniRuns& runs) {
  Outcome o;
  o.require(runs.error.empty(), "mini run failed: " + runs.error);
  if (!o.pass) return o;
  const auto a = directory_bytes(runs.dir / "first/report");
  const auto b = directory_bytes(runs.dir / "second/report");
  o.require(a.contains("report.json"), "no report.json");
  o.require(a == b, "reports differ between identical runs");
  o.require(directory_bytes(runs.dir / "first/results") == directory_bytes(runs.dir / "second/results"),
            "stage results differ between identical runs");
  return o;
}

Outcome golden(const MiniRuns& runs) {
  Outcome o;
  o.require(runs.error.empty(), "mini run failed: " + runs.error);
  if (!o.pass) return o;
  const auto expected = directory_bytes(testing::kSourceDir / "data/mini/golden");
  const auto got = directory_bytes(runs.dir / "first/report");
  o.require(!expected.empty(), "no golden files");
  for (const auto& [name, bytes] : expected) {
    const auto it = got.find(name);
    o.require(it != got.end(), "missing " + name);
    if (it != got.end()) o.require(it->second == bytes, name + " differs from golden");
  }
  o.require(got.size() == expected.size(), "report file set differs from golden");
  return o;
}

// 5 -------------------------------------------------------------------------

FeatureMatrix planted(std::size_t n, std::uint64_t seed, const std::string& prefix) {
  Rng rng(seed);
  Matrix x(n, 30);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 3);
    for (std::size_t j = 0; j < 30; ++j) x(i, j) = (j < 5 ? static_cast<double>(y[i]) : 0.0) + rng.normal();
  }
  return testing::to_features(x, y, prefix);
}

/// Plug-in mutual information (nats) between a column cut into equal-count
/// bins and the label.
double mutual_information(const FeatureMatrix& m, std::size_t col, std::size_t bins = 8) {
  const std::size_t n = m.rows();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return m.values(a, col) < m.values(b, col); });
  std::vector<std::array<double, 3>> joint(bins, {0, 0, 0});
  for (std::size_t r = 0; r < n; ++r) joint[r * bins / n][m.labels[order[r]].index()] += 1.0 / static_cast<double>(n);
  std::array<double, 3> py{0, 0, 0};
  for (const auto& row : joint) {
    for (int c = 0; c < 3; ++c) py[c] += row[c];
  }
  double mi = 0.0;
  for (const auto& row : joint) {
    const double pb = row[0] + row[1] + row[2];
    for (int c = 0; c < 3; ++c) {
      if (row[c] > 0) mi += row[c] * std::log(row[c] / (pb * py[c]));
    }
  }
  return mi;
}

Outcome rfe_recovery() {
  Outcome o;
  int good_seeds = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto m = planted(300, seed, "s" + std::to_string(seed) + "-");
    double min_informative = 1e9, max_noise = 0.0;
    for (std::size_t j = 0; j < 30; ++j) {
      const double mi = mutual_information(m, j);
      if (j < 5) min_informative = std::min(min_informative, mi);
      else max_noise = std::max(max_noise, mi);
    }
    o.require(min_informative > 0.15 && min_informative > 2.0 * max_noise,
              "informative columns not certified by mutual information for seed " + std::to_string(seed));

    const auto ranking = selector::rfe_rank(ClassifierSpec::make(ClassifierFamily::LR, {}, seed), m);
    auto sorted = ranking.ranks;
    std::sort(sorted.begin(), sorted.end());
    for (int r = 1; r <= 30; ++r) o.require(sorted[r - 1] == r, "ranks are not a permutation of 1..30");
    for (std::size_t k = 1; k < 30; ++k) {
      const auto a = selector::select_k(ranking, k);
      const auto b = selector::select_k(ranking, k + 1);
      const std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
      o.require(std::includes(sb.begin(), sb.end(), sa.begin(), sa.end()), "select_k is not nested");
    }
    int hits = 0;
    for (const auto& f : selector::select_k(ranking, 5)) {
      hits += f == "f0" || f == "f1" || f == "f2" || f == "f3" || f == "f4";
    }
    good_seeds += hits >= 4;
  }
  o.require(good_seeds >= 9, "only " + std::to_string(good_seeds) + "/10 seeds recovered >= 4 informative");
  return o;
}

// 6 -------------------------------------------------------------------------

Outcome sweep_endpoint(const MiniRuns& runs) {
  Outcome o;
  const auto tr = planted(120, 77, "tr");
  const auto te = planted(60, 78, "te");
  for (auto f : kAllFamilies) {
    nlohmann::json hp = nlohmann::json::object();
    if (f == ClassifierFamily::RF) hp["n_estimators"] = 15;
    if (f == ClassifierFamily::MLP) hp = {{"hidden_units", 8}, {"max_iter", 60}};
    const auto spec = ClassifierSpec::make(f, hp, 31);
    const auto curve = selector::sweep(spec, tr, te, "", {2});
    o.require(curve.points.size() == 30 && curve.points.back().k == 30, "sweep does not end at k=30");
    o.require(curve.points.back().accuracy == fit_score(spec, tr, te),
              std::string(to_string(f)) + " k=30 accuracy differs from the unrestricted model");
  }

  o.require(runs.error.empty() && runs.first, "mini run failed: " + runs.error);
  if (!o.pass) return o;
  const auto& r = *runs.first;
  for (const auto& curve : r.rfe["curves"]) {
    const auto clf = curve["classifier"].get<std::string>();
    bool matched = false;
    for (const auto& e : r.classifiers["results"]) {
      if (e["features"] != "combined" || e["classifier"] != clf) continue;
      matched = true;
      o.require(curve["sweep"].back()["accuracy"].get<double>() == e["accuracy"].get<double>(),
                "mini run: " + clf + " sweep endpoint differs from the combined result");
    }
    o.require(matched, "mini run: no combined result for " + clf);
  }
  return o;
}

// 7 -------------------------------------------------------------------------

Outcome paper_arithmetic() {
  Outcome o;
  const std::pair<std::size_t, const char*> cases[] = {{179, "0.4661"}, {164, "0.4271"}, {172, "0.4479"},
                                                       {197, "0.5130"}, {206, "0.5365"}, {210, "0.5469"}};
  std::vector<EmpathyLabel> truth;
  for (std::size_t i = 0; i < 384; ++i) truth.push_back(EmpathyLabel::from_index(static_cast<int>(i % 3)));
  for (const auto& [correct, expected] : cases) {
    std::vector<std::optional<EmpathyLabel>> pred;
    for (std::size_t i = 0; i < 384; ++i) {
      const int t = truth[i].index();
      pred.push_back(EmpathyLabel::from_index(i < correct ? t : (t + 1) % 3));
    }
    const auto cm = bench::ConfusionMatrix::from(pred, truth);
    o.require(cm.trace() == correct && cm.total() == 384, "confusion counts wrong");
    o.require(bench::accuracy_text(cm.accuracy()) == expected,
              std::to_string(correct) + "/384 printed as " + bench::accuracy_text(cm.accuracy()));
    o.require(bench::accuracy_text(accuracy(pred, truth)) == expected, "model accuracy helper disagrees");
  }
  return o;
}

}  // namespace

int main() {
  report(1, "balance 640/class, split 1536/384 stratified and disjoint", balancing_and_split);
  report(2, "parser fixtures", parser_suite);
  report(3, "classifier oracles", classifier_oracles);
  MiniRuns runs;
  report(4, "byte-identical reports across identical runs", [&] { return determinism(runs); });
  report(5, "RFE recovers informative features", rfe_recovery);
  report(6, "sweep endpoint equals unrestricted accuracy", [&] { return sweep_endpoint(runs); });
  report(7, "accuracy arithmetic for 179/164/172/197/206/210 of 384", paper_arithmetic);
  report(8, "mini run-all matches the golden report", [&] { return golden(runs); });
  return failures == 0 ? 0 : 1;
}
