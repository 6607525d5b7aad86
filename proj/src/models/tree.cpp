// CART with Gini impurity; random forest of bootstrapped CART trees.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "empathy/kernels.hpp"
#include "empathy/models/families.hpp"
#include "empathy/rng.hpp"

namespace empathy::models::detail {

namespace {

using Counts = std::array<double, kClasses>;

double gini(const Counts& counts, double total) {
  if (total <= 0.0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += (c / total) * (c / total);
  return 1.0 - s;
}

struct Tree {
  std::vector<int> feature;  // -1 for leaves
  std::vector<double> threshold;
  std::vector<int> left, right;
  std::vector<double> value;  // kClasses per node, class proportions
  std::vector<double> importance;

  int add_leaf(const Counts& counts, double total) {
    feature.push_back(-1);
    threshold.push_back(0.0);
    left.push_back(-1);
    right.push_back(-1);
    for (double c : counts) value.push_back(c / total);
    return static_cast<int>(feature.size()) - 1;
  }

  std::span<const double> leaf_for(std::span<const double> row) const {
    int node = 0;
    while (feature[node] >= 0) node = row[feature[node]] <= threshold[node] ? left[node] : right[node];
    return {value.data() + node * kClasses, kClasses};
  }

  nlohmann::json to_json() const {
    return {{"feature", feature}, {"threshold", threshold}, {"left", left},
            {"right", right},     {"value", value},         {"importance", importance}};
  }

  static Tree from_json(const nlohmann::json& j) {
    Tree t;
    t.feature = j.at("feature").get<std::vector<int>>();
    t.threshold = j.at("threshold").get<std::vector<double>>();
    t.left = j.at("left").get<std::vector<int>>();
    t.right = j.at("right").get<std::vector<int>>();
    t.value = j.at("value").get<std::vector<double>>();
    t.importance = j.at("importance").get<std::vector<double>>();
    return t;
  }
};

struct GrowOptions {
  std::optional<int> max_depth;
  int min_samples_split = 2;
  std::size_t max_features = 0;  // 0 = all
};

class TreeBuilder {
public:
  TreeBuilder(const Matrix& x, std::span<const int> y, const GrowOptions& options, std::uint64_t seed)
      : x_(x), y_(y), options_(options), rng_(seed) {}

  Tree build(std::vector<std::size_t> samples) {
    tree_.importance.assign(x_.cols, 0.0);
    features_.resize(x_.cols);
    std::iota(features_.begin(), features_.end(), std::size_t{0});
    grow(samples, 0);
    const double total = std::accumulate(tree_.importance.begin(), tree_.importance.end(), 0.0);
    if (total > 0.0) {
      for (double& v : tree_.importance) v /= total;
    }
    return std::move(tree_);
  }

private:
  struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double impurity = std::numeric_limits<double>::infinity();  // weighted child impurity
    bool found = false;
  };

  Counts count(std::span<const std::size_t> samples) const {
    Counts c{};
    for (auto s : samples) c[y_[s]] += 1.0;
    return c;
  }

  void scan_feature(std::size_t f, std::span<std::size_t> samples, Split& best) {
    std::sort(samples.begin(), samples.end(), [&](std::size_t a, std::size_t b) {
      const double va = x_(a, f), vb = x_(b, f);
      return va < vb || (va == vb && a < b);
    });
    const double n = static_cast<double>(samples.size());
    Counts left{}, right = count(samples);
    for (std::size_t k = 0; k + 1 < samples.size(); ++k) {
      left[y_[samples[k]]] += 1.0;
      right[y_[samples[k]]] -= 1.0;
      const double lo = x_(samples[k], f), hi = x_(samples[k + 1], f);
      if (!(lo < hi)) continue;
      const double nl = static_cast<double>(k + 1), nr = n - nl;
      const double impurity = (nl * gini(left, nl) + nr * gini(right, nr)) / n;
      if (impurity < best.impurity) {
        double thr = lo + (hi - lo) / 2.0;
        if (!(thr < hi)) thr = lo;
        best = {f, thr, impurity, true};
      }
    }
  }

  int grow(std::vector<std::size_t>& samples, int depth) {
    const Counts counts = count(samples);
    const double n = static_cast<double>(samples.size());
    const double node_impurity = gini(counts, n);
    const bool depth_capped = options_.max_depth && depth >= *options_.max_depth;
    if (node_impurity <= 0.0 || depth_capped || samples.size() < static_cast<std::size_t>(options_.min_samples_split)) {
      return tree_.add_leaf(counts, n);
    }

    Split best;
    if (options_.max_features == 0 || options_.max_features >= x_.cols) {
      for (std::size_t f = 0; f < x_.cols; ++f) scan_feature(f, samples, best);
    } else {
      // Draw features without replacement; keep drawing past the quota while
      // no valid split has been found.
      std::size_t visited = 0;
      for (std::size_t k = 0; k < x_.cols; ++k) {
        const std::size_t pick = k + static_cast<std::size_t>(rng_.below(x_.cols - k));
        std::swap(features_[k], features_[pick]);
        scan_feature(features_[k], samples, best);
        ++visited;
        if (visited >= options_.max_features && best.found) break;
      }
    }
    if (!best.found) return tree_.add_leaf(counts, n);

    std::vector<std::size_t> left_samples, right_samples;
    for (auto s : samples) (x_(s, best.feature) <= best.threshold ? left_samples : right_samples).push_back(s);
    samples.clear();
    samples.shrink_to_fit();
    tree_.importance[best.feature] += n * node_impurity - n * best.impurity;

    const int node = tree_.add_leaf(counts, n);
    tree_.feature[node] = static_cast<int>(best.feature);
    tree_.threshold[node] = best.threshold;
    const int l = grow(left_samples, depth + 1);
    tree_.left[node] = l;
    const int r = grow(right_samples, depth + 1);
    tree_.right[node] = r;
    return node;
  }

  const Matrix& x_;
  std::span<const int> y_;
  GrowOptions options_;
  Rng rng_;
  Tree tree_;
  std::vector<std::size_t> features_;
};

class ForestModel final : public Model {
public:
  ForestModel(std::size_t n_features, std::vector<Tree> trees) : n_features_(n_features), trees_(std::move(trees)) {}

  Matrix class_scores(const Matrix& x) const override {
    Matrix out(x.rows, kClasses);
    const double n_trees = static_cast<double>(trees_.size());
    for (std::size_t r = 0; r < x.rows; ++r) {
      for (const auto& t : trees_) {
        const auto leaf = t.leaf_for(x.row(r));
        for (int c = 0; c < kClasses; ++c) out(r, c) += leaf[c];
      }
      for (int c = 0; c < kClasses; ++c) out(r, c) /= n_trees;
    }
    return out;
  }

  std::optional<std::vector<double>> intrinsic_importance() const override {
    std::vector<double> imp(n_features_, 0.0);
    for (const auto& t : trees_) {
      for (std::size_t f = 0; f < n_features_; ++f) imp[f] += t.importance[f];
    }
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (total > 0.0) {
      for (double& v : imp) v /= total;
    }
    return imp;
  }

  nlohmann::json parameters() const override {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) trees.push_back(t.to_json());
    return {{"n_features", n_features_}, {"trees", std::move(trees)}};
  }

  static std::shared_ptr<const Model> from_json(const nlohmann::json& p) {
    std::vector<Tree> trees;
    for (const auto& t : p.at("trees")) trees.push_back(Tree::from_json(t));
    return std::make_shared<ForestModel>(p.at("n_features").get<std::size_t>(), std::move(trees));
  }

private:
  std::size_t n_features_;
  std::vector<Tree> trees_;
};

std::optional<int> optional_int(const nlohmann::json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<int>();
}

std::size_t resolve_max_features(const nlohmann::json& v, std::size_t n_features) {
  if (v.is_null()) return 0;
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    const double root = s == "sqrt" ? std::sqrt(static_cast<double>(n_features))
                                    : std::log2(static_cast<double>(n_features));
    return std::max<std::size_t>(1, static_cast<std::size_t>(root));
  }
  return std::min<std::size_t>(n_features, v.get<std::size_t>());
}

}  // namespace

std::shared_ptr<const Model> fit_tree(const Matrix& x, std::span<const int> y, FitContext ctx) {
  const auto& hp = ctx.hyperparameters;
  GrowOptions options{optional_int(hp.at("max_depth")), hp.at("min_samples_split").get<int>(),
                      resolve_max_features(hp.at("max_features"), x.cols)};
  std::vector<std::size_t> samples(x.rows);
  std::iota(samples.begin(), samples.end(), std::size_t{0});
  std::vector<Tree> trees;
  trees.push_back(TreeBuilder(x, y, options, mix_seed(ctx.seed, 0xD7)).build(std::move(samples)));
  return std::make_shared<ForestModel>(x.cols, std::move(trees));
}

std::shared_ptr<const Model> load_tree(const nlohmann::json& p) { return ForestModel::from_json(p); }

std::shared_ptr<const Model> fit_forest(const Matrix& x, std::span<const int> y, FitContext ctx) {
  const auto& hp = ctx.hyperparameters;
  GrowOptions options{optional_int(hp.at("max_depth")), hp.at("min_samples_split").get<int>(),
                      resolve_max_features(hp.at("max_features"), x.cols)};
  const auto n_trees = hp.at("n_estimators").get<std::size_t>();
  const bool bootstrap = hp.at("bootstrap").get<bool>();
  std::vector<Tree> trees(n_trees);
  kernels::for_each_index(n_trees, [&](std::size_t t) {
    Rng sampler(mix_seed(ctx.seed, 0xB007, t));
    std::vector<std::size_t> samples(x.rows);
    if (bootstrap) {
      for (auto& s : samples) s = static_cast<std::size_t>(sampler.below(x.rows));
    } else {
      std::iota(samples.begin(), samples.end(), std::size_t{0});
    }
    trees[t] = TreeBuilder(x, y, options, mix_seed(ctx.seed, 0x7EE, t)).build(std::move(samples));
  });
  return std::make_shared<ForestModel>(x.cols, std::move(trees));
}

std::shared_ptr<const Model> load_forest(const nlohmann::json& p) { return ForestModel::from_json(p); }

}  // namespace empathy::models::detail
