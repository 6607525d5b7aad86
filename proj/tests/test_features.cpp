#include <doctest.h>

#include <cmath>

#include "empathy/features.hpp"
#include "synthetic_llm.hpp"
#include "test_support.hpp"

using namespace empathy;
using testing::TempDir;

namespace {

SubfactorRegistry registry15() {
  std::vector<SubfactorDefinition> defs;
  for (int i = 0; i < 15; ++i) defs.push_back({"Sub Factor " + std::to_string(i), "d", kDimensions[i / 5]});
  return SubfactorRegistry(RegistryVersion::custom, defs);
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("MITI multi-hot encoding") {
  const auto& vocab = MitiVocabulary::standard();
  CHECK(vocab.size() == 15);
  const std::vector<std::string> codes{"affirm", " Open Question", "Affirm"};
  const auto v = encode_miti(codes, vocab);
  REQUIRE(v.values.size() == 15);
  int ones = 0;
  for (int x : v.values) ones += x;
  CHECK(ones == 2);
  CHECK(v.values[*vocab.index_of("Affirm")] == 1);
  CHECK(v.values[*vocab.index_of("Open Question")] == 1);
  CHECK(encode_miti({}, vocab).values == std::vector<int>(15, 0));
  const std::vector<std::string> bad{"Hug"};
  CHECK_THROWS_AS(encode_miti(bad, vocab), DataError);
  CHECK(vocab.column_names()[0] == "CLOSED_QUESTION");
}

TEST_CASE("combined features put MITI columns first") {
  MitiVector m{std::vector<int>(15, 0)};
  m.values[2] = 1;
  SubfactorVector s{std::vector<int>(15, 7)};
  const auto c = concat_features(m, s);
  REQUIRE(c.size() == 30);
  CHECK(c[2] == 1.0);
  CHECK(c[15] == 7.0);

  const auto reg = registry15();
  FeatureSources sources;
  sources.registry = &reg;
  const auto schema = schema_for(FeatureFamily::combined, sources);
  REQUIRE(schema.size() == 30);
  CHECK(schema[0] == "CLOSED_QUESTION");
  CHECK(schema[15] == "sub_factor_0");
}

TEST_CASE("assemble_matrix reports every record lacking features") {
  const auto reg = registry15();
  std::vector<DialogueTriplet> records{testing::triplet("a", 1, {"Affirm"}), testing::triplet("b", 2),
                                      testing::triplet("c", 3)};
  FeatureSources sources;
  sources.registry = &reg;
  sources.subfactors["a"] = SubfactorVector{std::vector<int>(15, 3)};
  try {
    assemble_matrix(records, FeatureFamily::subfactor, sources);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("b") != std::string::npos);
    CHECK(msg.find("c") != std::string::npos);
  }
  sources.subfactors["b"] = SubfactorVector{std::vector<int>(15, 4)};
  sources.subfactors["c"] = SubfactorVector{std::vector<int>(15, 5)};
  const auto m = assemble_matrix(records, FeatureFamily::combined, sources);
  CHECK(m.rows() == 3);
  CHECK(m.cols() == 30);
  CHECK(m.record_ids == std::vector<std::string>{"a", "b", "c"});
  CHECK(m.values(0, *MitiVocabulary::standard().index_of("Affirm")) == 1.0);
  CHECK(m.values(2, 29) == 5.0);
  CHECK(m.labels[1].value() == 2);
}

TEST_CASE("standardization is fit on train, applied to test, and idempotent") {
  Matrix x(4, 2);
  const double col0[] = {1, 2, 3, 4};
  for (int i = 0; i < 4; ++i) {
    x(i, 0) = col0[i];
    x(i, 1) = 5.0;
  }
  const auto m = testing::to_features(x, {0, 1, 2, 0});
  auto [z, stats] = standardize(m);
  CHECK(stats.means[0] == doctest::Approx(2.5));
  CHECK(stats.stds[0] == doctest::Approx(std::sqrt(1.25)));
  CHECK(stats.constant[1]);
  CHECK(z.values(0, 1) == 5.0);
  double sum = 0;
  for (int i = 0; i < 4; ++i) sum += z.values(i, 0);
  CHECK(sum == doctest::Approx(0.0));
  CHECK(z.standardized_with == stats.fingerprint());

  const auto again = standardize(z, stats).first;
  CHECK(again.values == z.values);

  Matrix t(1, 2);
  t(0, 0) = 2.5;
  t(0, 1) = 9.0;
  const auto test = standardize(testing::to_features(t, {1}), stats).first;
  CHECK(test.values(0, 0) == doctest::Approx(0.0));
  CHECK(test.values(0, 1) == 9.0);
}

TEST_CASE("feature store round-trips exact doubles") {
  TempDir dir;
  Matrix x(3, 2);
  x(0, 0) = 0.1;
  x(0, 1) = 1.0 / 3.0;
  x(1, 0) = -1e-300;
  x(1, 1) = 123456789.123456789;
  x(2, 0) = std::nextafter(1.0, 2.0);
  x(2, 1) = 0.0;
  const auto m = testing::to_features(x, {0, 1, 2});
  write_feature_store(dir / "f.csv", m);
  const auto back = read_feature_store(dir / "f.csv");
  CHECK(back.values == m.values);
  CHECK(back.schema == m.schema);
  CHECK(back.record_ids == m.record_ids);
  CHECK(back.labels == m.labels);
  CHECK(std::stod(format_double(0.1)) == 0.1);
}

TEST_CASE("feature matrix validation") {
  Matrix x(2, 1);
  x(1, 0) = std::nan("");
  CHECK_THROWS_AS(testing::to_features(x, {0, 1}).validate(), DataError);
  auto m = testing::to_features(Matrix(2, 1), {0, 1});
  m.record_ids[1] = m.record_ids[0];
  CHECK_THROWS_AS(m.validate(), DataError);
  const std::vector<std::string> names{"f0", "nope"};
  CHECK_THROWS(m.column_indices(names));
}

TEST_CASE("embeddings come through the gateway with the expected dimension") {
  TempDir cache;
  const auto corpus = testing::corpus_with_counts(2, 2, 2);
  llm::BackendConfig cfg;
  cfg.mode = llm::BackendMode::live;
  cfg.cache_dir = cache.path();
  cfg.requests_per_minute = 1e9;
  llm::Gateway gateway(cfg, std::make_shared<tools::SyntheticLlm>(corpus.records));
  EmbeddingOptions options{"mock-embedding-8", 8, false};
  const auto vectors = embed_records(corpus.records, gateway, options);
  CHECK(vectors.size() == 6);
  CHECK(vectors.at("c1-0").values.size() == 8);
  CHECK(vectors.at("c1-0").model_id == "mock-embedding-8");
  options.dimension = 16;
  CHECK_THROWS_AS(embed_record(corpus.records[0], gateway, options), BackendError);
}

}  // TEST_SUITE
