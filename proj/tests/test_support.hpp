#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "empathy/corpus.hpp"
#include "empathy/features.hpp"
#include "empathy/rng.hpp"

namespace testing {

inline const std::filesystem::path kSourceDir = EMPATHY_SOURCE_DIR;

class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("empathy_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& content) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline empathy::DialogueTriplet triplet(const std::string& id, int label, std::vector<std::string> codes = {}) {
  empathy::DialogueTriplet t;
  t.id = id;
  t.situation = "situation for " + id;
  t.utterance = "utterance for " + id;
  t.response = "response for " + id;
  t.human_score = empathy::EmpathyLabel::from_int(label);
  t.miti_annotation = std::move(codes);
  return t;
}

/// Records with the given per-class counts, classes interleaved by id.
inline empathy::RawCorpus corpus_with_counts(std::size_t c1, std::size_t c2, std::size_t c3) {
  std::vector<empathy::DialogueTriplet> out;
  const std::size_t counts[3] = {c1, c2, c3};
  for (int label = 1; label <= 3; ++label) {
    for (std::size_t i = 0; i < counts[label - 1]; ++i) {
      out.push_back(triplet("c" + std::to_string(label) + "-" + std::to_string(i), label));
    }
  }
  return empathy::RawCorpus::from_records(std::move(out));
}

inline empathy::FeatureMatrix to_features(const empathy::Matrix& x, const std::vector<int>& y,
                                          const std::string& prefix = "r") {
  empathy::FeatureMatrix m;
  m.values = x;
  for (std::size_t j = 0; j < x.cols; ++j) m.schema.push_back("f" + std::to_string(j));
  for (std::size_t i = 0; i < x.rows; ++i) {
    m.record_ids.push_back(prefix + std::to_string(i));
    m.labels.push_back(empathy::EmpathyLabel::from_index(y[i]));
  }
  return m;
}

/// Gaussian blobs: class c is centred at separation * e_c (first three
/// coordinates), remaining coordinates are pure noise.
inline empathy::FeatureMatrix blobs(std::size_t per_class, std::size_t dims, double separation, double sd,
                                    std::uint64_t seed, const std::string& prefix = "r") {
  empathy::Rng rng(seed);
  empathy::Matrix x(per_class * 3, dims);
  std::vector<int> y;
  for (std::size_t i = 0; i < per_class * 3; ++i) {
    const int c = static_cast<int>(i % 3);
    y.push_back(c);
    for (std::size_t j = 0; j < dims; ++j) {
      x(i, j) = sd * rng.normal() + (j == static_cast<std::size_t>(c) ? separation : 0.0);
    }
  }
  return to_features(x, y, prefix);
}

inline empathy::FeatureMatrix take_rows(const empathy::FeatureMatrix& m, const std::vector<std::size_t>& rows) {
  empathy::FeatureMatrix out;
  out.schema = m.schema;
  out.values = empathy::Matrix(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < m.cols(); ++j) out.values(r, j) = m.values(rows[r], j);
    out.record_ids.push_back(m.record_ids[rows[r]]);
    out.labels.push_back(m.labels[rows[r]]);
  }
  return out;
}

inline std::vector<empathy::EmpathyLabel> labels_of(const empathy::FeatureMatrix& m) { return m.labels; }

}  // namespace testing
