#include <doctest.h>
#include <omp.h>

#include <algorithm>
#include <set>

#include "empathy/csv.hpp"
#include "empathy/kernels.hpp"
#include "empathy/selector.hpp"
#include "test_support.hpp"

using namespace empathy;
using namespace empathy::models;
using testing::TempDir;

namespace {

/// `informative` columns carry class-dependent means; the rest are noise.
FeatureMatrix planted(std::size_t n, std::size_t informative, std::size_t noise, std::uint64_t seed,
                      const std::string& prefix = "r") {
  Rng rng(seed);
  Matrix x(n, informative + noise);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 3);
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double shift = j < informative ? 1.2 * (y[i] - 1) * (j % 2 ? -1.0 : 1.0) : 0.0;
      x(i, j) = shift + rng.normal();
    }
  }
  return testing::to_features(x, y, prefix);
}

void check_ranking_shape(const selector::RfeRanking& r) {
  const auto n = r.schema.size();
  std::vector<int> sorted = r.ranks;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < n; ++i) CHECK(sorted[i] == static_cast<int>(i + 1));
  CHECK(r.elimination_order.size() == n);
  for (std::size_t k = 1; k < n; ++k) {
    const auto a = selector::select_k(r, k);
    const auto b = selector::select_k(r, k + 1);
    CHECK(a.size() == k);
    CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end(), [&](const auto& x, const auto& y) {
      const auto ix = std::find(r.schema.begin(), r.schema.end(), x);
      const auto iy = std::find(r.schema.begin(), r.schema.end(), y);
      return ix < iy;
    }));
  }
}

}  // namespace

TEST_SUITE("selector") {

TEST_CASE("RFE ranks form a nested permutation for every family") {
  const auto m = planted(60, 3, 5, 4);
  for (auto f : kAllFamilies) {
    INFO(to_string(f));
    nlohmann::json hp = nlohmann::json::object();
    if (f == ClassifierFamily::RF) hp["n_estimators"] = 10;
    if (f == ClassifierFamily::MLP) hp = {{"hidden_units", 8}, {"max_iter", 40}};
    const auto spec = ClassifierSpec::make(f, hp, 3);
    const auto r = selector::rfe_rank(spec, m, {2});
    check_ranking_shape(r);
    CHECK(r.importance.size() == 8);
    CHECK(r.method == (supports_intrinsic(spec) ? ImportanceMethod::intrinsic : ImportanceMethod::permutation));
  }
}

TEST_CASE("RFE with LR keeps the planted features") {
  const auto m = planted(150, 4, 8, 12);
  const auto r = selector::rfe_rank(ClassifierSpec::make(ClassifierFamily::LR), m);
  const auto top = selector::select_k(r, 4);
  CHECK(top == std::vector<std::string>{"f0", "f1", "f2", "f3"});
  CHECK(r.elimination_order.back().size() == 2);
}

TEST_CASE("ties eliminate the later feature first") {
  Matrix x(30, 3);
  std::vector<int> y(30);
  for (std::size_t i = 0; i < 30; ++i) {
    y[i] = static_cast<int>(i % 3);
    x(i, 0) = 1.0;
    x(i, 1) = 1.0;
    x(i, 2) = static_cast<double>(y[i]);
  }
  const auto r = selector::rfe_rank(ClassifierSpec::make(ClassifierFamily::DT), testing::to_features(x, y));
  CHECK(r.elimination_order == std::vector<std::string>{"f1", "f0", "f2"});
  CHECK(r.ranks == std::vector<int>{2, 3, 1});
}

TEST_CASE("select_k bounds") {
  const auto r = selector::rfe_rank(ClassifierSpec::make(ClassifierFamily::LR), planted(30, 2, 2, 1));
  CHECK_THROWS_AS(selector::select_k(r, 0), PreconditionError);
  CHECK_THROWS_AS(selector::select_k(r, 5), PreconditionError);
  CHECK(selector::select_k(r, 4) == r.schema);
}

TEST_CASE("sweep endpoint equals the unrestricted model and is policy independent") {
  omp_set_num_threads(3);
  const auto tr = planted(60, 3, 5, 5, "tr");
  const auto te = planted(30, 3, 5, 6, "te");
  for (auto f : {ClassifierFamily::LR, ClassifierFamily::SVC, ClassifierFamily::RF}) {
    INFO(to_string(f));
    nlohmann::json hp = nlohmann::json::object();
    if (f == ClassifierFamily::RF) hp["n_estimators"] = 10;
    const auto spec = ClassifierSpec::make(f, hp, 17);
    const auto ranking = selector::rfe_rank(spec, tr);
    selector::SweepCurve serial, parallel;
    {
      kernels::ExecScope s(kernels::Exec::serial);
      serial = selector::sweep(spec, ranking, tr, te, "fp");
    }
    {
      kernels::ExecScope s(kernels::Exec::parallel);
      parallel = selector::sweep(spec, ranking, tr, te, "fp");
    }
    REQUIRE(serial.points.size() == 8);
    const double full = accuracy(predict(train(spec, tr), te), te.labels);
    CHECK(serial.points.back().accuracy == full);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(serial.points[i].k == i + 1);
      CHECK(serial.points[i].accuracy == parallel.points[i].accuracy);
    }
    const auto best = std::max_element(serial.points.begin(), serial.points.end(),
                                       [](const auto& a, const auto& b) { return a.accuracy < b.accuracy; });
    CHECK(serial.best_k == best->k);
    CHECK(serial.best_accuracy == best->accuracy);
  }
  omp_set_num_threads(1);
}

TEST_CASE("sweep rejects mismatched schemas") {
  const auto tr = planted(30, 2, 2, 1);
  auto te = planted(15, 2, 2, 2, "te");
  const auto spec = ClassifierSpec::make(ClassifierFamily::LR);
  const auto r = selector::rfe_rank(spec, tr);
  te.schema[0] = "renamed";
  CHECK_THROWS_AS(selector::sweep(spec, r, tr, te, ""), PreconditionError);
}

TEST_CASE("importance table and CSV outputs") {
  TempDir dir;
  const auto m = planted(45, 2, 2, 9);
  const auto lr = selector::rfe_rank(ClassifierSpec::make(ClassifierFamily::LR), m);
  const auto dt = selector::rfe_rank(ClassifierSpec::make(ClassifierFamily::DT), m);
  const auto table = selector::importance_report({{"LR", lr, 2}, {"DT", dt, 1}});
  REQUIRE(table.rows.size() == 4);
  int selected_lr = 0, selected_dt = 0;
  for (const auto& row : table.rows) {
    selected_lr += row.entries[0].selected;
    selected_dt += row.entries[1].selected;
  }
  CHECK(selected_lr == 2);
  CHECK(selected_dt == 1);
  CHECK_THROWS_AS(selector::importance_report({{"LR", lr, 9}}), PreconditionError);

  selector::write_importance_csv(dir / "imp.csv", table);
  const auto rows = csv::read_file(dir / "imp.csv");
  CHECK(rows.front() == csv::Row{"feature", "LR_rank", "LR_importance", "LR_selected", "DT_rank", "DT_importance",
                                 "DT_selected"});
  CHECK(rows.size() == 5);

  const auto curve = selector::sweep(ClassifierSpec::make(ClassifierFamily::LR), lr, m, m, "fp");
  selector::write_sweep_csv(dir / "sweep.csv", {curve});
  const auto sweep_rows = csv::read_file(dir / "sweep.csv");
  CHECK(sweep_rows.size() == 5);
  CHECK(sweep_rows[4][1] == "4");
}

}  // TEST_SUITE
