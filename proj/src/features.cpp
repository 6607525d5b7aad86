#include "empathy/features.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "empathy/concurrency.hpp"
#include "empathy/csv.hpp"
#include "empathy/hash.hpp"
#include "empathy/llm/prompts.hpp"
#include "empathy/text.hpp"

namespace empathy {

std::string_view to_string(FeatureFamily f) {
  switch (f) {
    case FeatureFamily::embedding: return "embedding";
    case FeatureFamily::miti: return "miti";
    case FeatureFamily::subfactor: return "subfactor";
    case FeatureFamily::combined: return "combined";
  }
  return "combined";
}

FeatureFamily parse_feature_family(std::string_view raw) {
  const auto s = text::canonical_name(raw);
  if (s == "embedding" || s == "embeddings") return FeatureFamily::embedding;
  if (s == "miti") return FeatureFamily::miti;
  if (s == "subfactor" || s == "subfactors") return FeatureFamily::subfactor;
  if (s == "combined") return FeatureFamily::combined;
  throw DataError("unknown feature family: '" + std::string(raw) + "'");
}

std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------

void FeatureMatrix::validate() const {
  if (values.cols != schema.size()) throw DataError("feature matrix width does not match its schema");
  if (values.rows != record_ids.size() || values.rows != labels.size()) {
    throw DataError("feature matrix rows, record ids and labels are misaligned");
  }
  if (values.data.size() != values.rows * values.cols) throw DataError("feature matrix storage is inconsistent");
  std::set<std::string> ids;
  for (const auto& id : record_ids) {
    if (!ids.insert(id).second) throw DataError("duplicate record id in feature matrix: " + id);
  }
  for (double v : values.data) {
    if (!std::isfinite(v)) throw DataError("feature matrix contains a non-finite value");
  }
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const std::size_t> columns) const {
  FeatureMatrix out;
  out.values = values.select_columns(columns);
  for (auto c : columns) out.schema.push_back(schema.at(c));
  out.record_ids = record_ids;
  out.labels = labels;
  return out;
}

std::vector<std::size_t> FeatureMatrix::column_indices(std::span<const std::string> names) const {
  std::vector<std::size_t> idx;
  idx.reserve(names.size());
  for (const auto& n : names) {
    const auto it = std::find(schema.begin(), schema.end(), n);
    if (it == schema.end()) throw DataError("unknown feature column: " + n);
    idx.push_back(static_cast<std::size_t>(it - schema.begin()));
  }
  return idx;
}

// ---------------------------------------------------------------------------

MitiVector encode_miti(std::span<const std::string> annotation, const MitiVocabulary& vocabulary) {
  MitiVector v;
  v.values.assign(vocabulary.size(), 0);
  for (const auto& code : annotation) {
    const auto idx = vocabulary.index_of(code);
    if (!idx) throw DataError("unknown MITI code: '" + code + "'");
    v.values[*idx] = 1;
  }
  return v;
}

EmbeddingVector embed_record(const DialogueTriplet& triplet, llm::Gateway& gateway, const EmbeddingOptions& options) {
  llm::EmbeddingRequest req{options.model_id, llm::embedding_input(triplet, options.response_only)};
  auto response = gateway.embed(req);
  if (response.values.size() != options.dimension) {
    throw BackendError("embedding for record " + triplet.id + " has length " + std::to_string(response.values.size()) +
                       ", expected " + std::to_string(options.dimension) + " for model " + options.model_id);
  }
  for (double v : response.values) {
    if (!std::isfinite(v)) throw BackendError("embedding for record " + triplet.id + " has a non-finite entry");
  }
  return EmbeddingVector{std::move(response.values), options.model_id};
}

std::map<std::string, EmbeddingVector> embed_records(std::span<const DialogueTriplet> records, llm::Gateway& gateway,
                                                     const EmbeddingOptions& options) {
  std::vector<EmbeddingVector> out(records.size());
  run_bounded(records.size(), gateway.config().max_in_flight,
              [&](std::size_t i) { out[i] = embed_record(records[i], gateway, options); });
  std::map<std::string, EmbeddingVector> by_id;
  for (std::size_t i = 0; i < records.size(); ++i) by_id.emplace(records[i].id, std::move(out[i]));
  return by_id;
}

std::vector<double> concat_features(const MitiVector& miti, const SubfactorVector& subfactors) {
  std::vector<double> row;
  row.reserve(miti.values.size() + subfactors.values.size());
  for (int v : miti.values) row.push_back(v);
  for (int v : subfactors.values) row.push_back(v);
  return row;
}

std::vector<std::string> schema_for(FeatureFamily family, const FeatureSources& sources) {
  auto subfactor_cols = [&] {
    if (!sources.registry) throw PreconditionError("subfactor features need a registry");
    return sources.registry->column_names();
  };
  switch (family) {
    case FeatureFamily::miti: return sources.vocabulary->column_names();
    case FeatureFamily::subfactor: return subfactor_cols();
    case FeatureFamily::combined: {
      auto cols = sources.vocabulary->column_names();
      const auto sub = subfactor_cols();
      cols.insert(cols.end(), sub.begin(), sub.end());
      return cols;
    }
    case FeatureFamily::embedding: {
      std::size_t dim = 0;
      if (!sources.embeddings.empty()) dim = sources.embeddings.begin()->second.values.size();
      std::vector<std::string> cols;
      for (std::size_t i = 0; i < dim; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "emb_%04zu", i);
        cols.emplace_back(buf);
      }
      return cols;
    }
  }
  return {};
}

FeatureMatrix assemble_matrix(std::span<const DialogueTriplet> records, FeatureFamily family,
                              const FeatureSources& sources) {
  FeatureMatrix m;
  m.schema = schema_for(family, sources);
  const std::size_t width = m.schema.size();
  m.values = Matrix(records.size(), width);

  std::vector<std::string> missing;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& t = records[r];
    if (!seen.insert(t.id).second) throw DataError("duplicate record id: " + t.id);
    m.record_ids.push_back(t.id);
    m.labels.push_back(t.human_score);

    std::vector<double> row;
    const SubfactorVector* sub = nullptr;
    if (family == FeatureFamily::subfactor || family == FeatureFamily::combined) {
      const auto it = sources.subfactors.find(t.id);
      if (it == sources.subfactors.end()) {
        missing.push_back(t.id);
        continue;
      }
      sub = &it->second;
    }
    switch (family) {
      case FeatureFamily::miti:
        for (int v : encode_miti(t.miti_annotation, *sources.vocabulary).values) row.push_back(v);
        break;
      case FeatureFamily::subfactor:
        row.assign(sub->values.begin(), sub->values.end());
        break;
      case FeatureFamily::combined:
        row = concat_features(encode_miti(t.miti_annotation, *sources.vocabulary), *sub);
        break;
      case FeatureFamily::embedding: {
        const auto it = sources.embeddings.find(t.id);
        if (it == sources.embeddings.end()) {
          missing.push_back(t.id);
          continue;
        }
        row = it->second.values;
        break;
      }
    }
    if (row.size() != width) {
      throw DataError("record " + t.id + " has " + std::to_string(row.size()) + " " + std::string(to_string(family)) +
                      " features, schema has " + std::to_string(width));
    }
    std::copy(row.begin(), row.end(), m.values.row(r).begin());
  }
  if (!missing.empty()) {
    throw DataError("records missing " + std::string(to_string(family)) + " features: " + text::join(missing, ", "));
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------

std::string StandardizationStats::fingerprint() const {
  std::string buf = text::join(schema, ",") + "|";
  for (std::size_t j = 0; j < means.size(); ++j) buf += format_double(means[j]) + ":" + format_double(stds[j]) + ";";
  return sha256_hex(buf);
}

StandardizationStats fit_standardization(const FeatureMatrix& m) {
  StandardizationStats s;
  s.schema = m.schema;
  const std::size_t n = m.rows(), d = m.cols();
  s.means.assign(d, 0.0);
  s.stds.assign(d, 0.0);
  s.constant.assign(d, true);
  if (n == 0) return s;
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += m.values(i, j);
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    bool constant = true;
    for (std::size_t i = 0; i < n; ++i) {
      const double dv = m.values(i, j) - mean;
      ss += dv * dv;
      if (m.values(i, j) != m.values(0, j)) constant = false;
    }
    s.means[j] = mean;
    s.stds[j] = constant ? 0.0 : std::sqrt(ss / static_cast<double>(n));
    s.constant[j] = constant || s.stds[j] == 0.0;
  }
  return s;
}

std::pair<FeatureMatrix, StandardizationStats> standardize(const FeatureMatrix& matrix,
                                                           const std::optional<StandardizationStats>& given) {
  const StandardizationStats stats = given ? *given : fit_standardization(matrix);
  if (stats.schema != matrix.schema) throw DataError("standardization stats do not match the matrix schema");
  const auto fp = stats.fingerprint();
  if (matrix.standardized_with == fp) return {matrix, stats};

  FeatureMatrix out = matrix;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      if (stats.constant[j]) continue;
      out.values(i, j) = (out.values(i, j) - stats.means[j]) / stats.stds[j];
    }
  }
  out.standardized_with = fp;
  return {std::move(out), stats};
}

// ---------------------------------------------------------------------------

void write_feature_store(const std::filesystem::path& path, const FeatureMatrix& m) {
  m.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature store: " + path.string());
  csv::Row header{"id", "label"};
  header.insert(header.end(), m.schema.begin(), m.schema.end());
  csv::write_row(out, header);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    csv::Row row{m.record_ids[i], std::to_string(m.labels[i].value())};
    for (double v : m.values.row(i)) row.push_back(format_double(v));
    csv::write_row(out, row);
  }
}

FeatureMatrix read_feature_store(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "id" || rows[0][1] != "label") {
    throw DataError("feature store " + path.string() + " lacks an id,label header");
  }
  FeatureMatrix m;
  m.schema.assign(rows[0].begin() + 2, rows[0].end());
  m.values = Matrix(rows.size() - 1, m.schema.size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != m.schema.size() + 2) {
      throw DataError("feature store " + path.string() + " row " + std::to_string(r - 1) + " has the wrong width");
    }
    m.record_ids.push_back(row[0]);
    m.labels.push_back(EmpathyLabel::from_int(std::stoi(row[1])));
    for (std::size_t j = 0; j < m.schema.size(); ++j) {
      double v = 0.0;
      const auto& s = row[j + 2];
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw DataError("feature store " + path.string() + " row " + std::to_string(r - 1) + ": bad number '" + s + "'");
      }
      m.values(r - 1, j) = v;
    }
  }
  m.validate();
  return m;
}

}  // namespace empathy
