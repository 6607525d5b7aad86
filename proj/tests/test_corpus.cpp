#include <doctest.h>

#include <algorithm>
#include <set>

#include "empathy/corpus.hpp"
#include "empathy/hash.hpp"
#include "test_support.hpp"

using namespace empathy;
using testing::TempDir;

TEST_SUITE("corpus") {

TEST_CASE("csv loader keeps row order and parses quoted fields") {
  TempDir dir;
  testing::spit(dir / "d.csv",
                "id,situation,utterance,response,source,human_score,miti_codes\n"
                "a,\"I lost, again\",\"He said \"\"no\"\"\",ok,human,2,Affirm|Support\n"
                "b,s,u,\"multi\nline\",chatgpt,3,\n"
                "c,s,u,r,llm_empathy_prompted,1,closed question\n");
  const auto corpus = load_corpus(dir / "d.csv");
  REQUIRE(corpus.size() == 3);
  CHECK(corpus.records[0].situation == "I lost, again");
  CHECK(corpus.records[0].utterance == "He said \"no\"");
  CHECK(corpus.records[0].miti_annotation == std::vector<std::string>{"Affirm", "Support"});
  CHECK(corpus.records[1].response == "multi\nline");
  CHECK(corpus.records[1].source == ResponseSource::llm);
  CHECK(corpus.records[1].miti_annotation.empty());
  CHECK(corpus.records[2].source == ResponseSource::llm_empathy_prompted);
  CHECK(corpus.class_counts == ClassCounts{1, 1, 1});
}

TEST_CASE("jsonl loader matches the csv loader") {
  TempDir dir;
  std::vector<DialogueTriplet> records{testing::triplet("x1", 1, {"Affirm"}), testing::triplet("x2", 3)};
  write_records_jsonl(dir / "r.jsonl", records);
  const auto back = load_corpus(dir / "r.jsonl");
  CHECK(back.records == records);
}

TEST_CASE("loader rejects bad rows") {
  TempDir dir;
  const std::string header = "id,situation,utterance,response,source,human_score,miti_codes\n";
  SUBCASE("score out of range") {
    testing::spit(dir / "d.csv", header + "a,s,u,r,human,4,\n");
    CHECK_THROWS_AS(load_corpus(dir / "d.csv"), DataError);
  }
  SUBCASE("blank response") {
    testing::spit(dir / "d.csv", header + "a,s,u,  ,human,2,\n");
    CHECK_THROWS_AS(load_corpus(dir / "d.csv"), DataError);
  }
  SUBCASE("unknown MITI code") {
    testing::spit(dir / "d.csv", header + "a,s,u,r,human,2,Hug\n");
    CHECK_THROWS_AS(load_corpus(dir / "d.csv"), DataError);
  }
  SUBCASE("missing column") {
    testing::spit(dir / "d.csv", "id,situation,utterance,response,human_score\na,s,u,r,2\n");
    CHECK_THROWS_AS(load_corpus(dir / "d.csv"), DataError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_corpus(dir / "nope.csv"), DataError); }
}

TEST_CASE("balance undersamples to the minority class and keeps order") {
  const auto raw = testing::corpus_with_counts(640, 1811, 3549);
  const auto balanced = balance(raw, 7);
  CHECK(balanced.class_counts == ClassCounts{640, 640, 640});
  std::vector<std::size_t> positions;
  for (const auto& t : balanced.records) {
    const auto it = std::find_if(raw.records.begin(), raw.records.end(), [&](const auto& r) { return r.id == t.id; });
    REQUIRE(it != raw.records.end());
    positions.push_back(static_cast<std::size_t>(it - raw.records.begin()));
  }
  CHECK(std::is_sorted(positions.begin(), positions.end()));
  CHECK(balance(raw, 7).records == balanced.records);
  CHECK(balance(raw, 8).records != balanced.records);
}

TEST_CASE("split is stratified, disjoint and seeded") {
  const auto balanced = balance(testing::corpus_with_counts(640, 1811, 3549), 1);
  const auto s = split(balanced, 0.8, 99);
  CHECK(s.train.size() == 1536);
  CHECK(s.test.size() == 384);
  CHECK(count_classes(s.train) == ClassCounts{512, 512, 512});
  CHECK(count_classes(s.test) == ClassCounts{128, 128, 128});
  std::set<std::string> ids;
  for (const auto& t : s.train) ids.insert(t.id);
  for (const auto& t : s.test) CHECK(ids.insert(t.id).second);
  CHECK(ids.size() == 1920);
  CHECK(fingerprint(split(balanced, 0.8, 99)) == fingerprint(s));
  CHECK(fingerprint(split(balanced, 0.8, 100)) != fingerprint(s));
}

TEST_CASE("split preconditions") {
  const auto balanced = balance(testing::corpus_with_counts(5, 5, 5), 1);
  CHECK_THROWS_AS(split(balanced, 0.0, 1), PreconditionError);
  CHECK_THROWS_AS(split(balanced, 1.0, 1), PreconditionError);
  CHECK_THROWS_AS(split(testing::corpus_with_counts(5, 6, 5), 0.8, 1), PreconditionError);
}

TEST_CASE("saved splits reload identically and detect tampering") {
  TempDir dir;
  const auto s = split(balance(testing::corpus_with_counts(10, 12, 15), 3), 0.8, 4);
  const auto manifest = save_split(s, dir.path(), "abc");
  CHECK(manifest.split_fingerprint == fingerprint(s));
  const auto back = load_split(dir.path());
  CHECK(back.train == s.train);
  CHECK(back.test == s.test);
  CHECK(fingerprint(back) == fingerprint(s));

  auto content = testing::slurp(dir / "test.jsonl");
  content.replace(content.find("response for"), 12, "RESPONSE FOR");
  testing::spit(dir / "test.jsonl", content);
  CHECK_THROWS_AS(load_split(dir.path()), DataError);
}

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // TEST_SUITE
