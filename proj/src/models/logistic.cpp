// Multinomial logistic regression with an L2 penalty on the weights (not the
// intercepts). Objective: mean cross-entropy + ||W||^2 / (2 C n).

#include <algorithm>
#include <array>
#include <cmath>

#include "empathy/models/families.hpp"
#include "empathy/models/lbfgs.hpp"

namespace empathy::models::detail {

namespace {

class LogisticModel final : public Model {
public:
  LogisticModel(std::size_t n_features, std::vector<double> weights, std::vector<double> intercepts)
      : n_features_(n_features), weights_(std::move(weights)), intercepts_(std::move(intercepts)) {}

  Matrix class_scores(const Matrix& x) const override {
    Matrix out(x.rows, kClasses);
    for (std::size_t i = 0; i < x.rows; ++i) {
      const auto row = x.row(i);
      std::array<double, kClasses> z{};
      for (int c = 0; c < kClasses; ++c) {
        double s = intercepts_[c];
        const double* w = weights_.data() + c * n_features_;
        for (std::size_t j = 0; j < n_features_; ++j) s += w[j] * row[j];
        z[c] = s;
      }
      const double m = std::max({z[0], z[1], z[2]});
      double total = 0.0;
      for (int c = 0; c < kClasses; ++c) total += (z[c] = std::exp(z[c] - m));
      for (int c = 0; c < kClasses; ++c) out(i, c) = z[c] / total;
    }
    return out;
  }

  std::optional<std::vector<double>> intrinsic_importance() const override {
    std::vector<double> imp(n_features_, 0.0);
    for (std::size_t j = 0; j < n_features_; ++j) {
      for (int c = 0; c < kClasses; ++c) imp[j] += std::abs(weights_[c * n_features_ + j]);
      imp[j] /= kClasses;
    }
    return imp;
  }

  nlohmann::json parameters() const override {
    return {{"n_features", n_features_}, {"weights", weights_}, {"intercepts", intercepts_}};
  }

private:
  std::size_t n_features_;
  std::vector<double> weights_;     // class-major, kClasses x n_features
  std::vector<double> intercepts_;  // kClasses
};

}  // namespace

std::shared_ptr<const Model> fit_logistic(const Matrix& x, std::span<const int> y, FitContext ctx) {
  const std::size_t n = x.rows, d = x.cols;
  const double c_reg = ctx.hyperparameters.at("C").get<double>();
  const double n_d = static_cast<double>(n);
  const double penalty = 1.0 / (2.0 * c_reg * n_d);
  const std::size_t n_params = kClasses * d + kClasses;

  auto objective = [&](std::span<const double> w, std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const double* b = w.data() + kClasses * d;
    double loss = 0.0;
    std::array<double, kClasses> z{};
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = x.row(i);
      for (int c = 0; c < kClasses; ++c) {
        double s = b[c];
        const double* wc = w.data() + c * d;
        for (std::size_t j = 0; j < d; ++j) s += wc[j] * row[j];
        z[c] = s;
      }
      const double m = std::max({z[0], z[1], z[2]});
      double total = 0.0;
      for (int c = 0; c < kClasses; ++c) total += std::exp(z[c] - m);
      const double log_total = m + std::log(total);
      loss += log_total - z[y[i]];
      for (int c = 0; c < kClasses; ++c) {
        const double residual = (std::exp(z[c] - log_total) - (c == y[i] ? 1.0 : 0.0)) / n_d;
        double* gc = grad.data() + c * d;
        for (std::size_t j = 0; j < d; ++j) gc[j] += residual * row[j];
        grad[kClasses * d + c] += residual;
      }
    }
    loss /= n_d;
    for (std::size_t k = 0; k < kClasses * d; ++k) {
      loss += penalty * w[k] * w[k];
      grad[k] += 2.0 * penalty * w[k];
    }
    return loss;
  };

  LbfgsOptions options;
  options.max_iterations = ctx.hyperparameters.at("max_iter").get<int>();
  options.gradient_tolerance = ctx.hyperparameters.at("tol").get<double>();
  auto result = lbfgs_minimize(objective, std::vector<double>(n_params, 0.0), options);
  if (!result.converged) {
    ctx.warnings.push_back("LR: L-BFGS stopped after " + std::to_string(result.iterations) +
                           " iterations without meeting the tolerance");
  }
  std::vector<double> weights(result.x.begin(), result.x.begin() + kClasses * d);
  std::vector<double> intercepts(result.x.begin() + kClasses * d, result.x.end());
  return std::make_shared<LogisticModel>(d, std::move(weights), std::move(intercepts));
}

std::shared_ptr<const Model> load_logistic(const nlohmann::json& p) {
  return std::make_shared<LogisticModel>(p.at("n_features").get<std::size_t>(),
                                         p.at("weights").get<std::vector<double>>(),
                                         p.at("intercepts").get<std::vector<double>>());
}

}  // namespace empathy::models::detail
