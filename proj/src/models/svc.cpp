// C-SVC trained one-vs-one with an SMO solver using second-order working set
// selection (Fan, Chen & Lin 2005), no shrinking.

#include <algorithm>
#include <cmath>
#include <limits>

#include "empathy/kernels.hpp"
#include "empathy/models/families.hpp"

namespace empathy::models::detail {

namespace {

constexpr double kTau = 1e-12;

struct BinaryProblem {
  const Matrix& kernel;  // n x n
  std::vector<double> y; // +1 / -1
  double c;
  double eps;
  long max_iter;
};

struct BinarySolution {
  std::vector<double> alpha;
  double rho = 0.0;
  long iterations = 0;
  bool converged = true;
};

BinarySolution solve_smo(const BinaryProblem& p) {
  const std::size_t n = p.y.size();
  const auto& y = p.y;
  const double c = p.c;
  std::vector<double> alpha(n, 0.0), grad(n, -1.0);
  auto q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * p.kernel(i, j); };
  auto at_upper = [&](std::size_t i) { return alpha[i] >= c; };
  auto at_lower = [&](std::size_t i) { return alpha[i] <= 0.0; };

  BinarySolution sol;
  long iter = 0;
  for (; iter < p.max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t i_sel = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] > 0) {
        if (!at_upper(t) && -grad[t] >= gmax) {
          gmax = -grad[t];
          i_sel = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!at_lower(t) && grad[t] >= gmax) {
        gmax = grad[t];
        i_sel = static_cast<std::ptrdiff_t>(t);
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t j_sel = -1;
    double best_obj = std::numeric_limits<double>::infinity();
    if (i_sel >= 0) {
      const auto i = static_cast<std::size_t>(i_sel);
      const double kii = p.kernel(i, i);
      for (std::size_t t = 0; t < n; ++t) {
        double grad_diff = 0.0, quad = 0.0;
        if (y[t] > 0) {
          if (at_lower(t)) continue;
          gmax2 = std::max(gmax2, grad[t]);
          grad_diff = gmax + grad[t];
          quad = kii + p.kernel(t, t) - 2.0 * y[i] * q(i, t);
        } else {
          if (at_upper(t)) continue;
          gmax2 = std::max(gmax2, -grad[t]);
          grad_diff = gmax - grad[t];
          quad = kii + p.kernel(t, t) + 2.0 * y[i] * q(i, t);
        }
        if (grad_diff <= 0.0) continue;
        const double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
        if (obj <= best_obj) {
          best_obj = obj;
          j_sel = static_cast<std::ptrdiff_t>(t);
        }
      }
    }
    if (i_sel < 0 || j_sel < 0 || gmax + gmax2 < p.eps) break;

    const auto i = static_cast<std::size_t>(i_sel);
    const auto j = static_cast<std::size_t>(j_sel);
    const double old_i = alpha[i], old_j = alpha[j];
    const double qij = q(i, j);
    if (y[i] != y[j]) {
      double quad = p.kernel(i, i) + p.kernel(j, j) + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = c - diff;
        }
      } else if (alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      double quad = p.kernel(i, i) + p.kernel(j, j) - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = sum - c;
        }
        if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = sum - c;
        }
      } else {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = sum;
        }
        if (alpha[i] < 0.0) {
          alpha[i] = 0.0;
          alpha[j] = sum;
        }
      }
    }
    const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) grad[t] += q(i, t) * di + q(j, t) * dj;
  }
  sol.iterations = iter;
  sol.converged = iter < p.max_iter;

  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (at_upper(t)) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (at_lower(t)) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  sol.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
  sol.alpha = std::move(alpha);
  return sol;
}

struct PairModel {
  int positive = 0;  // votes go here when the decision value is > 0
  int negative = 1;
  std::vector<std::size_t> support;  // rows of the support matrix
  std::vector<double> coef;          // alpha_i * y_i
  double rho = 0.0;
};

class SvcModel final : public Model {
public:
  SvcModel(bool linear, double gamma, Matrix support, std::vector<PairModel> pairs)
      : linear_(linear), gamma_(gamma), support_(std::move(support)), pairs_(std::move(pairs)) {}

  Matrix decision_values(const Matrix& x) const {
    const Matrix k = linear_ ? kernels::linear_kernel(x, support_) : kernels::rbf_kernel(x, support_, gamma_);
    Matrix out(x.rows, pairs_.size());
    for (std::size_t r = 0; r < x.rows; ++r) {
      for (std::size_t p = 0; p < pairs_.size(); ++p) {
        const auto& pair = pairs_[p];
        double s = 0.0;
        for (std::size_t m = 0; m < pair.support.size(); ++m) s += pair.coef[m] * k(r, pair.support[m]);
        out(r, p) = s - pair.rho;
      }
    }
    return out;
  }

  Matrix class_scores(const Matrix& x) const override {
    const Matrix dec = decision_values(x);
    Matrix votes(x.rows, kClasses);
    for (std::size_t r = 0; r < x.rows; ++r) {
      for (std::size_t p = 0; p < pairs_.size(); ++p) {
        const auto& pair = pairs_[p];
        votes(r, dec(r, p) > 0.0 ? pair.positive : pair.negative) += 1.0;
      }
    }
    return votes;
  }

  std::optional<std::vector<double>> intrinsic_importance() const override {
    if (!linear_) return std::nullopt;
    std::vector<double> imp(support_.cols, 0.0);
    for (const auto& pair : pairs_) {
      std::vector<double> w(support_.cols, 0.0);
      for (std::size_t m = 0; m < pair.support.size(); ++m) {
        const auto row = support_.row(pair.support[m]);
        for (std::size_t f = 0; f < w.size(); ++f) w[f] += pair.coef[m] * row[f];
      }
      for (std::size_t f = 0; f < w.size(); ++f) imp[f] += std::abs(w[f]);
    }
    for (double& v : imp) v /= static_cast<double>(pairs_.size());
    return imp;
  }

  nlohmann::json parameters() const override {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : pairs_) {
      pairs.push_back({{"positive", p.positive}, {"negative", p.negative}, {"support", p.support},
                       {"coef", p.coef}, {"rho", p.rho}});
    }
    return {{"kernel", linear_ ? "linear" : "rbf"},
            {"gamma", gamma_},
            {"n_features", support_.cols},
            {"support_vectors", support_.data},
            {"pairs", std::move(pairs)}};
  }

private:
  bool linear_;
  double gamma_;
  Matrix support_;
  std::vector<PairModel> pairs_;
};

double scale_gamma(const Matrix& x) {
  const double count = static_cast<double>(x.data.size());
  double mean = 0.0;
  for (double v : x.data) mean += v;
  mean /= count;
  double var = 0.0;
  for (double v : x.data) var += (v - mean) * (v - mean);
  var /= count;
  return var > 0.0 ? 1.0 / (static_cast<double>(x.cols) * var) : 1.0;
}

}  // namespace

std::shared_ptr<const Model> fit_svc(const Matrix& x, std::span<const int> y, FitContext ctx) {
  const auto& hp = ctx.hyperparameters;
  const bool linear = hp.at("kernel").get<std::string>() == "linear";
  const double gamma = hp.at("gamma").is_string() ? scale_gamma(x) : hp.at("gamma").get<double>();
  const double c = hp.at("C").get<double>();
  const double tol = hp.at("tol").get<double>();
  const long max_iter = hp.at("max_iter").get<long>();

  const Matrix kernel = linear ? kernels::linear_kernel(x, x) : kernels::rbf_kernel(x, x, gamma);

  std::vector<PairModel> pairs;
  std::vector<bool> is_support(x.rows, false);
  std::vector<std::vector<std::size_t>> pair_rows;
  for (int a = 0; a < kClasses; ++a) {
    for (int b = a + 1; b < kClasses; ++b) {
      std::vector<std::size_t> rows;
      std::vector<double> labels;
      for (std::size_t r = 0; r < x.rows; ++r) {
        if (y[r] == a || y[r] == b) {
          rows.push_back(r);
          labels.push_back(y[r] == a ? 1.0 : -1.0);
        }
      }
      Matrix sub(rows.size(), rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows.size(); ++j) sub(i, j) = kernel(rows[i], rows[j]);
      }
      const auto sol = solve_smo({sub, labels, c, tol, max_iter});
      if (!sol.converged) {
        ctx.warnings.push_back("SVC: solver for classes " + std::to_string(a + 1) + "/" + std::to_string(b + 1) +
                               " reached max_iter");
      }
      PairModel pair;
      pair.positive = a;
      pair.negative = b;
      pair.rho = sol.rho;
      std::vector<std::size_t> used;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (sol.alpha[i] > 0.0) {
          used.push_back(rows[i]);
          pair.coef.push_back(sol.alpha[i] * labels[i]);
          is_support[rows[i]] = true;
        }
      }
      pairs.push_back(std::move(pair));
      pair_rows.push_back(std::move(used));
    }
  }

  std::vector<std::size_t> remap(x.rows, 0), support_rows;
  for (std::size_t r = 0; r < x.rows; ++r) {
    if (is_support[r]) {
      remap[r] = support_rows.size();
      support_rows.push_back(r);
    }
  }
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (std::size_t r : pair_rows[p]) pairs[p].support.push_back(remap[r]);
  }
  return std::make_shared<SvcModel>(linear, gamma, x.select_rows(support_rows), std::move(pairs));
}

std::shared_ptr<const Model> load_svc(const nlohmann::json& p) {
  const auto cols = p.at("n_features").get<std::size_t>();
  Matrix support;
  support.cols = cols;
  support.data = p.at("support_vectors").get<std::vector<double>>();
  support.rows = cols == 0 ? 0 : support.data.size() / cols;
  std::vector<PairModel> pairs;
  for (const auto& j : p.at("pairs")) {
    PairModel pair;
    pair.positive = j.at("positive").get<int>();
    pair.negative = j.at("negative").get<int>();
    pair.support = j.at("support").get<std::vector<std::size_t>>();
    pair.coef = j.at("coef").get<std::vector<double>>();
    pair.rho = j.at("rho").get<double>();
    pairs.push_back(std::move(pair));
  }
  return std::make_shared<SvcModel>(p.at("kernel").get<std::string>() == "linear", p.at("gamma").get<double>(),
                                    std::move(support), std::move(pairs));
}

}  // namespace empathy::models::detail
