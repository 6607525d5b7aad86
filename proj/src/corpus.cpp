#include "empathy/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "empathy/csv.hpp"
#include "empathy/hash.hpp"
#include "empathy/rng.hpp"
#include "empathy/text.hpp"

namespace empathy {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// MITI vocabulary

MitiVocabulary::MitiVocabulary(std::vector<std::string> codes) : codes_(std::move(codes)) {
  for (const auto& code : codes_) {
    auto canon = text::canonical_name(code);
    if (canon.empty()) throw DataError("empty MITI code in vocabulary");
    if (std::find(canonical_.begin(), canonical_.end(), canon) != canonical_.end()) {
      throw DataError("duplicate MITI code in vocabulary: " + code);
    }
    canonical_.push_back(std::move(canon));
  }
}

const MitiVocabulary& MitiVocabulary::standard() {
  static const MitiVocabulary vocabulary({
      "Closed Question", "Open Question", "Simple Reflection", "Complex Reflection",
      "Give Information", "Advise with Permission", "Affirm", "Emphasize Autonomy",
      "Support", "Advise without Permission", "Confront", "Direct", "Warn",
      "Self-Disclose", "Other",
  });
  return vocabulary;
}

MitiVocabulary MitiVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open MITI vocabulary: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed MITI vocabulary " + path.string() + ": " + e.what());
  }
  if (!doc.contains("codes") || !doc["codes"].is_array()) {
    throw DataError("MITI vocabulary needs a \"codes\" array: " + path.string());
  }
  return MitiVocabulary(doc["codes"].get<std::vector<std::string>>());
}

std::optional<std::size_t> MitiVocabulary::index_of(std::string_view code) const {
  const auto canon = text::canonical_name(code);
  const auto it = std::find(canonical_.begin(), canonical_.end(), canon);
  if (it == canonical_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - canonical_.begin());
}

std::vector<std::string> MitiVocabulary::column_names() const {
  std::vector<std::string> names;
  names.reserve(codes_.size());
  for (const auto& code : codes_) names.push_back(text::to_upper(text::column_name(code)));
  return names;
}

// ---------------------------------------------------------------------------
// Records

void validate(const DialogueTriplet& t, const MitiVocabulary& vocabulary) {
  if (text::trim(t.id).empty()) throw DataError("record has an empty id");
  auto require = [&](const std::string& value, const char* field) {
    if (text::trim(value).empty()) {
      throw DataError("record " + t.id + ": field '" + field + "' is empty");
    }
  };
  require(t.situation, "situation");
  require(t.utterance, "utterance");
  require(t.response, "response");
  for (const auto& code : t.miti_annotation) {
    if (!vocabulary.contains(code)) {
      throw DataError("record " + t.id + ": unknown MITI code '" + code + "'");
    }
  }
}

ClassCounts count_classes(std::span<const DialogueTriplet> records) {
  ClassCounts counts{};
  for (const auto& r : records) ++counts[r.human_score.index()];
  return counts;
}

RawCorpus RawCorpus::from_records(std::vector<DialogueTriplet> records) {
  RawCorpus corpus;
  corpus.class_counts = count_classes(records);
  corpus.records = std::move(records);
  return corpus;
}

namespace {

const std::vector<std::string> kRequiredFields = {"id", "situation", "utterance", "response",
                                                  "source", "human_score", "miti_codes"};

std::string row_context(std::size_t row, const std::string& field) {
  return "row " + std::to_string(row) + ", field '" + field + "'";
}

EmpathyLabel parse_score_text(std::string_view raw, std::size_t row) {
  const std::string s = text::trim(raw);
  int value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DataError(row_context(row, "human_score") + ": not an integer: '" + s + "'");
  }
  if (value < EmpathyLabel::kMin || value > EmpathyLabel::kMax) {
    throw DataError(row_context(row, "human_score") + ": unknown score value " + s);
  }
  return EmpathyLabel::from_int(value);
}

std::vector<std::string> parse_codes(std::string_view raw) {
  std::vector<std::string> codes;
  if (text::trim(raw).empty()) return codes;
  for (auto& part : text::split(raw, '|')) {
    auto code = text::trim(part);
    if (!code.empty()) codes.push_back(std::move(code));
  }
  return codes;
}

DialogueTriplet checked(DialogueTriplet t, std::size_t row, const MitiVocabulary& vocabulary) {
  try {
    validate(t, vocabulary);
  } catch (const DataError& e) {
    throw DataError("row " + std::to_string(row) + ": " + e.what());
  }
  return t;
}

std::vector<DialogueTriplet> load_csv(const std::filesystem::path& path, char sep,
                                      const MitiVocabulary& vocabulary) {
  const auto rows = csv::read_file(path, sep);
  std::vector<DialogueTriplet> records;
  if (rows.empty()) return records;

  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < rows[0].size(); ++i) column[text::canonical_name(rows[0][i])] = i;
  for (const auto& f : kRequiredFields) {
    if (!column.contains(f)) throw DataError("dataset header is missing field '" + f + "'");
  }

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t index = r - 1;
    auto get = [&](const std::string& f) -> const std::string& {
      const std::size_t c = column.at(f);
      if (c >= row.size()) throw DataError(row_context(index, f) + ": missing value");
      return row[c];
    };
    DialogueTriplet t;
    t.id = text::trim(get("id"));
    t.situation = get("situation");
    t.utterance = get("utterance");
    t.response = get("response");
    try {
      t.source = parse_response_source(get("source"));
    } catch (const DataError& e) {
      throw DataError(row_context(index, "source") + ": " + e.what());
    }
    t.human_score = parse_score_text(get("human_score"), index);
    t.miti_annotation = parse_codes(get("miti_codes"));
    records.push_back(checked(std::move(t), index, vocabulary));
  }
  return records;
}

DialogueTriplet triplet_from_json(const json& obj, std::size_t index, const MitiVocabulary& vocabulary) {
  if (!obj.is_object()) throw DataError("row " + std::to_string(index) + ": not a JSON object");
  auto text_field = [&](const std::string& f) -> std::string {
    if (!obj.contains(f)) throw DataError(row_context(index, f) + ": missing");
    const auto& v = obj[f];
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw DataError(row_context(index, f) + ": expected a string");
  };
  DialogueTriplet t;
  t.id = text::trim(text_field("id"));
  t.situation = text_field("situation");
  t.utterance = text_field("utterance");
  t.response = text_field("response");
  try {
    t.source = parse_response_source(text_field("source"));
  } catch (const DataError& e) {
    throw DataError(row_context(index, "source") + ": " + e.what());
  }
  if (!obj.contains("human_score")) throw DataError(row_context(index, "human_score") + ": missing");
  const auto& score = obj["human_score"];
  if (score.is_number_integer()) {
    const auto v = score.get<long long>();
    if (v < EmpathyLabel::kMin || v > EmpathyLabel::kMax) {
      throw DataError(row_context(index, "human_score") + ": unknown score value " + std::to_string(v));
    }
    t.human_score = EmpathyLabel::from_int(static_cast<int>(v));
  } else if (score.is_string()) {
    t.human_score = parse_score_text(score.get<std::string>(), index);
  } else {
    throw DataError(row_context(index, "human_score") + ": expected an integer");
  }
  if (obj.contains("miti_codes")) {
    const auto& codes = obj["miti_codes"];
    if (codes.is_string()) {
      t.miti_annotation = parse_codes(codes.get<std::string>());
    } else if (codes.is_array()) {
      for (const auto& c : codes) t.miti_annotation.push_back(text::trim(c.get<std::string>()));
    } else if (!codes.is_null()) {
      throw DataError(row_context(index, "miti_codes") + ": expected string or array");
    }
  } else {
    throw DataError(row_context(index, "miti_codes") + ": missing");
  }
  return checked(std::move(t), index, vocabulary);
}

std::vector<DialogueTriplet> load_jsonl(const std::filesystem::path& path, const MitiVocabulary& vocabulary) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset: " + path.string());
  std::vector<DialogueTriplet> records;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("row " + std::to_string(index) + ": malformed JSON: " + e.what());
    }
    records.push_back(triplet_from_json(obj, index, vocabulary));
    ++index;
  }
  return records;
}

ordered_json triplet_to_json(const DialogueTriplet& t) {
  ordered_json obj;
  obj["id"] = t.id;
  obj["situation"] = t.situation;
  obj["utterance"] = t.utterance;
  obj["response"] = t.response;
  obj["source"] = std::string(to_string(t.source));
  obj["human_score"] = t.human_score.value();
  obj["miti_codes"] = text::join(t.miti_annotation, "|");
  return obj;
}

void check_unique_ids(std::span<const DialogueTriplet> records) {
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.id);
  std::sort(ids.begin(), ids.end());
  const auto dup = std::adjacent_find(ids.begin(), ids.end());
  if (dup != ids.end()) throw DataError("duplicate record id: " + *dup);
}

}  // namespace

RawCorpus load_corpus(const std::filesystem::path& path, const MitiVocabulary& vocabulary) {
  if (!std::filesystem::exists(path)) throw DataError("dataset file not found: " + path.string());
  const auto ext = text::to_lower(path.extension().string());
  std::vector<DialogueTriplet> records;
  if (ext == ".jsonl") {
    records = load_jsonl(path, vocabulary);
  } else {
    records = load_csv(path, ext == ".tsv" ? '\t' : ',', vocabulary);
  }
  check_unique_ids(records);
  return RawCorpus::from_records(std::move(records));
}

// ---------------------------------------------------------------------------
// Balancing and splitting

namespace {

std::array<std::vector<std::size_t>, EmpathyLabel::kNumClasses> indices_by_class(
    std::span<const DialogueTriplet> records) {
  std::array<std::vector<std::size_t>, EmpathyLabel::kNumClasses> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].human_score.index()].push_back(i);
  return by_class;
}

}  // namespace

RawCorpus balance(const RawCorpus& corpus, std::uint64_t seed) {
  const auto counts = count_classes(corpus.records);
  for (int c = 0; c < EmpathyLabel::kNumClasses; ++c) {
    if (counts[c] == 0) {
      throw PreconditionError("cannot balance: class absent (score " + std::to_string(c + 1) + ")");
    }
  }
  const std::size_t target = *std::min_element(counts.begin(), counts.end());

  auto by_class = indices_by_class(corpus.records);
  std::vector<char> keep(corpus.records.size(), 0);
  for (int c = 0; c < EmpathyLabel::kNumClasses; ++c) {
    Rng rng(mix_seed(seed, 0xBA1A, static_cast<std::uint64_t>(c)));
    auto& idx = by_class[c];
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t k = 0; k < target; ++k) keep[idx[k]] = 1;
  }

  std::vector<DialogueTriplet> kept;
  kept.reserve(target * EmpathyLabel::kNumClasses);
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    if (keep[i]) kept.push_back(corpus.records[i]);
  }
  return RawCorpus::from_records(std::move(kept));
}

BalancedSplit split(const RawCorpus& corpus, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw PreconditionError("split ratio must lie strictly between 0 and 1");
  }
  const auto counts = count_classes(corpus.records);
  if (!(counts[0] == counts[1] && counts[1] == counts[2])) {
    throw PreconditionError("split requires a balanced corpus");
  }
  const std::size_t per_class = counts[0];
  // The epsilon keeps e.g. 0.29 * 100 from flooring to 28.
  const auto train_per_class = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(per_class) + 1e-9));

  auto by_class = indices_by_class(corpus.records);
  std::vector<char> in_train(corpus.records.size(), 0);
  for (int c = 0; c < EmpathyLabel::kNumClasses; ++c) {
    Rng rng(mix_seed(seed, 0x5B17, static_cast<std::uint64_t>(c)));
    auto& idx = by_class[c];
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t k = 0; k < train_per_class; ++k) in_train[idx[k]] = 1;
  }

  BalancedSplit out;
  out.seed = seed;
  out.ratio = ratio;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    (in_train[i] ? out.train : out.test).push_back(corpus.records[i]);
  }
  if (train_per_class == 0) {
    out.warnings.push_back("split leaves the training partition empty (floor(" + text::fixed(ratio, 4) +
                           " x " + std::to_string(per_class) + ") = 0 per class)");
  }
  if (train_per_class == per_class) {
    out.warnings.push_back("split leaves the test partition empty");
  }
  return out;
}

std::string fingerprint(std::span<const DialogueTriplet> records) {
  std::string buf;
  for (const auto& r : records) {
    buf += triplet_to_json(r).dump();
    buf.push_back('\n');
  }
  return sha256_hex(buf);
}

std::string fingerprint(const BalancedSplit& s) {
  std::string buf = "seed=" + std::to_string(s.seed) + ";ratio=" + text::fixed(s.ratio, 6) + ";";
  buf += "train=" + fingerprint(s.train) + ";test=" + fingerprint(s.test);
  return sha256_hex(buf);
}

// ---------------------------------------------------------------------------
// Persistence

void write_records_jsonl(const std::filesystem::path& path, std::span<const DialogueTriplet> records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write: " + path.string());
  for (const auto& r : records) out << triplet_to_json(r).dump() << '\n';
}

std::vector<DialogueTriplet> read_records_jsonl(const std::filesystem::path& path,
                                                const MitiVocabulary& vocabulary) {
  if (!std::filesystem::exists(path)) throw DataError("file not found: " + path.string());
  return load_jsonl(path, vocabulary);
}

namespace {

ordered_json counts_json(const ClassCounts& c) {
  ordered_json j;
  j["1"] = c[0];
  j["2"] = c[1];
  j["3"] = c[2];
  return j;
}

ClassCounts counts_from_json(const json& j) {
  return {j.at("1").get<std::size_t>(), j.at("2").get<std::size_t>(), j.at("3").get<std::size_t>()};
}

}  // namespace

SplitManifest save_split(const BalancedSplit& s, const std::filesystem::path& dir,
                         const std::string& source_checksum) {
  std::filesystem::create_directories(dir);
  SplitManifest m;
  m.seed = s.seed;
  m.ratio = s.ratio;
  m.source_checksum = source_checksum;
  m.split_fingerprint = fingerprint(s);
  write_records_jsonl(dir / m.train_file, s.train);
  write_records_jsonl(dir / m.test_file, s.test);
  m.train_checksum = sha256_file(dir / m.train_file);
  m.test_checksum = sha256_file(dir / m.test_file);
  m.train_counts = count_classes(s.train);
  m.test_counts = count_classes(s.test);
  m.warnings = s.warnings;

  ordered_json j;
  j["seed"] = m.seed;
  j["ratio"] = m.ratio;
  j["stratified"] = true;
  j["source_checksum"] = m.source_checksum;
  j["split_fingerprint"] = m.split_fingerprint;
  j["train_file"] = m.train_file;
  j["train_checksum"] = m.train_checksum;
  j["train_counts"] = counts_json(m.train_counts);
  j["test_file"] = m.test_file;
  j["test_checksum"] = m.test_checksum;
  j["test_counts"] = counts_json(m.test_counts);
  j["warnings"] = m.warnings;
  std::ofstream out(dir / "split_manifest.json", std::ios::binary);
  out << j.dump(2) << '\n';
  return m;
}

SplitManifest load_split_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "split_manifest.json");
  if (!in) throw DataError("split manifest not found in " + dir.string());
  const json j = json::parse(in);
  SplitManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.ratio = j.at("ratio").get<double>();
  m.source_checksum = j.at("source_checksum").get<std::string>();
  m.split_fingerprint = j.at("split_fingerprint").get<std::string>();
  m.train_file = j.at("train_file").get<std::string>();
  m.test_file = j.at("test_file").get<std::string>();
  m.train_checksum = j.at("train_checksum").get<std::string>();
  m.test_checksum = j.at("test_checksum").get<std::string>();
  m.train_counts = counts_from_json(j.at("train_counts"));
  m.test_counts = counts_from_json(j.at("test_counts"));
  m.warnings = j.at("warnings").get<std::vector<std::string>>();
  return m;
}

BalancedSplit load_split(const std::filesystem::path& dir, const MitiVocabulary& vocabulary) {
  const auto m = load_split_manifest(dir);
  for (const auto& [file, sum] : {std::pair{m.train_file, m.train_checksum}, std::pair{m.test_file, m.test_checksum}}) {
    if (sha256_file(dir / file) != sum) throw DataError("checksum mismatch for " + (dir / file).string());
  }
  BalancedSplit s;
  s.seed = m.seed;
  s.ratio = m.ratio;
  s.train = read_records_jsonl(dir / m.train_file, vocabulary);
  s.test = read_records_jsonl(dir / m.test_file, vocabulary);
  s.warnings = m.warnings;
  return s;
}

}  // namespace empathy
