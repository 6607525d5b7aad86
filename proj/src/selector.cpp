#include "empathy/selector.hpp"

#include <fstream>
#include <numeric>

#include "empathy/csv.hpp"
#include "empathy/kernels.hpp"
#include "empathy/rng.hpp"
#include "empathy/text.hpp"

namespace empathy::selector {

namespace {

template <typename Fn>
auto with_context(const std::string& context, Fn&& fn) {
  try {
    return fn();
  } catch (const PreconditionError& e) {
    throw PreconditionError(context + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  }
}

}  // namespace

RfeRanking rfe_rank(const models::ClassifierSpec& spec, const FeatureMatrix& x, const RfeOptions& options) {
  const std::size_t n = x.cols();
  if (n == 0) throw PreconditionError("RFE needs at least one feature");
  RfeRanking out;
  out.schema = x.schema;
  out.ranks.assign(n, 0);
  out.spec = spec;
  out.seed = spec.seed;
  out.method = models::supports_intrinsic(spec) ? models::ImportanceMethod::intrinsic
                                                : models::ImportanceMethod::permutation;

  std::vector<std::size_t> remaining(n);
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  for (std::size_t round = 0; remaining.size() > 1; ++round) {
    const auto scores = with_context("RFE round " + std::to_string(round + 1) + " (" +
                                         std::to_string(remaining.size()) + " features)",
                                     [&] {
                                       const auto sub = x.select_columns(remaining);
                                       const auto model = models::train(spec, sub);
                                       return models::importance(model, sub, sub.labels, out.method,
                                                                 {options.permutation_repeats,
                                                                  mix_seed(spec.seed, 0x0F5E, round)});
                                     });
    if (round == 0) out.importance = scores;
    std::size_t worst = 0;
    for (std::size_t k = 1; k < scores.size(); ++k) {
      if (scores[k] <= scores[worst]) worst = k;
    }
    out.ranks[remaining[worst]] = static_cast<int>(remaining.size());
    out.elimination_order.push_back(x.schema[remaining[worst]]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  out.ranks[remaining.front()] = 1;
  out.elimination_order.push_back(x.schema[remaining.front()]);
  if (n == 1) {
    const auto model = with_context("RFE round 1 (1 features)", [&] { return models::train(spec, x); });
    out.importance = models::importance(model, x, x.labels, out.method, {options.permutation_repeats,
                                                                         mix_seed(spec.seed, 0x0F5E, 0)});
  }
  return out;
}

std::vector<std::string> select_k(const RfeRanking& ranking, std::size_t k) {
  if (k < 1 || k > ranking.schema.size()) {
    throw PreconditionError("k=" + std::to_string(k) + " outside 1.." + std::to_string(ranking.schema.size()));
  }
  std::vector<std::string> out;
  for (std::size_t f = 0; f < ranking.schema.size(); ++f) {
    if (static_cast<std::size_t>(ranking.ranks[f]) <= k) out.push_back(ranking.schema[f]);
  }
  return out;
}

SweepCurve sweep(const models::ClassifierSpec& spec, const RfeRanking& ranking, const FeatureMatrix& train,
                 const FeatureMatrix& test, const std::string& split_fingerprint) {
  if (train.schema != ranking.schema || test.schema != ranking.schema) {
    throw PreconditionError("sweep: train/test schemas differ from the ranking schema");
  }
  const std::size_t n = ranking.schema.size();
  SweepCurve curve;
  curve.model = spec.name();
  curve.spec = spec;
  curve.split_fingerprint = split_fingerprint;
  curve.points.resize(n);
  kernels::for_each_index(n, [&](std::size_t i) {
    const std::size_t k = i + 1;
    auto& point = curve.points[i];
    point.k = k;
    point.features = select_k(ranking, k);
    point.accuracy = with_context("sweep k=" + std::to_string(k), [&] {
      const auto columns = train.column_indices(point.features);
      const auto tr = train.select_columns(columns);
      const auto te = test.select_columns(columns);
      const auto model = models::train(spec, tr);
      return models::accuracy(models::predict(model, te), te.labels);
    });
  });
  for (const auto& p : curve.points) {
    if (curve.best_k == 0 || p.accuracy > curve.best_accuracy) {
      curve.best_k = p.k;
      curve.best_accuracy = p.accuracy;
    }
  }
  return curve;
}

SweepCurve sweep(const models::ClassifierSpec& spec, const FeatureMatrix& train, const FeatureMatrix& test,
                 const std::string& split_fingerprint, const RfeOptions& options) {
  return sweep(spec, rfe_rank(spec, train, options), train, test, split_fingerprint);
}

ImportanceTable importance_report(const std::vector<ModelSelection>& selections) {
  ImportanceTable table;
  if (selections.empty()) return table;
  const auto& schema = selections.front().ranking.schema;
  for (const auto& s : selections) {
    if (s.ranking.schema != schema) throw PreconditionError("importance_report: schema mismatch for " + s.model);
    if (s.k < 1 || s.k > schema.size()) throw PreconditionError("importance_report: k out of range for " + s.model);
  }
  for (std::size_t f = 0; f < schema.size(); ++f) {
    ImportanceRow row;
    row.feature = schema[f];
    for (const auto& s : selections) {
      const int rank = s.ranking.ranks[f];
      const double imp = f < s.ranking.importance.size() ? s.ranking.importance[f] : 0.0;
      row.entries.push_back({s.model, rank, imp, static_cast<std::size_t>(rank) <= s.k});
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_importance_csv(const std::filesystem::path& path, const ImportanceTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  std::vector<std::string> header{"feature"};
  if (!table.rows.empty()) {
    for (const auto& e : table.rows.front().entries) {
      header.push_back(e.model + "_rank");
      header.push_back(e.model + "_importance");
      header.push_back(e.model + "_selected");
    }
  }
  csv::write_row(out, header);
  for (const auto& row : table.rows) {
    std::vector<std::string> cells{row.feature};
    for (const auto& e : row.entries) {
      cells.push_back(std::to_string(e.rank));
      cells.push_back(text::fixed(e.importance, 6));
      cells.push_back(e.selected ? "1" : "0");
    }
    csv::write_row(out, cells);
  }
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepCurve>& curves) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  csv::write_row(out, {"model", "k", "accuracy", "features"});
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      csv::write_row(out, {c.model, std::to_string(p.k), text::fixed(p.accuracy, 4), text::join(p.features, "|")});
    }
  }
}

}  // namespace empathy::selector
