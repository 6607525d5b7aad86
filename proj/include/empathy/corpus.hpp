#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "empathy/common.hpp"
#include "empathy/miti.hpp"

namespace empathy {

/// One (situation context, speaker utterance, response) record with its human rating.
struct DialogueTriplet {
  std::string id;
  std::string situation;
  std::string utterance;
  std::string response;
  ResponseSource source = ResponseSource::human;
  EmpathyLabel human_score = EmpathyLabel::from_int(1);
  std::vector<std::string> miti_annotation;

  bool operator==(const DialogueTriplet&) const = default;
};

/// Throws DataError when a text field is blank or a MITI code is unknown.
void validate(const DialogueTriplet& triplet, const MitiVocabulary& vocabulary);

ClassCounts count_classes(std::span<const DialogueTriplet> records);

struct RawCorpus {
  std::vector<DialogueTriplet> records;
  ClassCounts class_counts{};

  static RawCorpus from_records(std::vector<DialogueTriplet> records);
  std::size_t size() const { return records.size(); }
};

struct BalancedSplit {
  std::vector<DialogueTriplet> train;
  std::vector<DialogueTriplet> test;
  std::uint64_t seed = 0;
  double ratio = 0.0;
  std::vector<std::string> warnings;
};

/// Reads a dataset file. `.jsonl` files hold one JSON object per line; anything
/// else is parsed as CSV (`.tsv` as tab-separated) with a header row naming
/// id, situation, utterance, response, source, human_score and miti_codes.
/// miti_codes is "|"-separated and may be empty. Row order is preserved.
RawCorpus load_corpus(const std::filesystem::path& path,
                      const MitiVocabulary& vocabulary = MitiVocabulary::standard());

/// Undersamples every class to the minority-class count, uniformly without
/// replacement. Kept records stay in their original order.
RawCorpus balance(const RawCorpus& corpus, std::uint64_t seed);

/// Stratified split of a balanced corpus: floor(ratio * per-class count) of
/// each class goes to train, the remainder to test.
BalancedSplit split(const RawCorpus& corpus, double ratio, std::uint64_t seed);

/// Content hash over ids, texts and labels of both partitions plus seed/ratio.
std::string fingerprint(const BalancedSplit& split);
std::string fingerprint(std::span<const DialogueTriplet> records);

// Persistence: records as JSON lines, splits as train/test files + manifest.
void write_records_jsonl(const std::filesystem::path& path, std::span<const DialogueTriplet> records);
std::vector<DialogueTriplet> read_records_jsonl(const std::filesystem::path& path,
                                                const MitiVocabulary& vocabulary = MitiVocabulary::standard());

struct SplitManifest {
  std::uint64_t seed = 0;
  double ratio = 0.0;
  std::string source_checksum;
  std::string split_fingerprint;
  std::string train_file = "train.jsonl";
  std::string test_file = "test.jsonl";
  std::string train_checksum;
  std::string test_checksum;
  ClassCounts train_counts{};
  ClassCounts test_counts{};
  std::vector<std::string> warnings;
};

SplitManifest save_split(const BalancedSplit& split, const std::filesystem::path& dir,
                         const std::string& source_checksum);
BalancedSplit load_split(const std::filesystem::path& dir,
                         const MitiVocabulary& vocabulary = MitiVocabulary::standard());
SplitManifest load_split_manifest(const std::filesystem::path& dir);

}  // namespace empathy
