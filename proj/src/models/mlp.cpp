// One-hidden-layer ReLU network with a softmax output, trained by minibatch
// Adam on cross-entropy plus an L2 penalty on the weights.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "empathy/kernels.hpp"
#include "empathy/models/families.hpp"
#include "empathy/rng.hpp"

namespace empathy::models::detail {

namespace {

struct Layers {
  Matrix w1;  // d x h
  std::vector<double> b1;
  Matrix w2;  // h x kClasses
  std::vector<double> b2;
};

Matrix hidden_activations(const Layers& net, const Matrix& x) {
  Matrix h = kernels::matmul(x, net.w1);
  for (std::size_t r = 0; r < h.rows; ++r) {
    for (std::size_t j = 0; j < h.cols; ++j) h(r, j) = std::max(0.0, h(r, j) + net.b1[j]);
  }
  return h;
}

Matrix softmax_output(const Layers& net, const Matrix& h) {
  Matrix out = kernels::matmul(h, net.w2);
  for (std::size_t r = 0; r < out.rows; ++r) {
    auto row = out.row(r);
    double m = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < kClasses; ++c) m = std::max(m, row[c] += net.b2[c]);
    double total = 0.0;
    for (int c = 0; c < kClasses; ++c) total += (row[c] = std::exp(row[c] - m));
    for (int c = 0; c < kClasses; ++c) row[c] /= total;
  }
  return out;
}

class MlpModel final : public Model {
public:
  explicit MlpModel(Layers net) : net_(std::move(net)) {}

  Matrix class_scores(const Matrix& x) const override { return softmax_output(net_, hidden_activations(net_, x)); }

  std::optional<std::vector<double>> intrinsic_importance() const override { return std::nullopt; }

  nlohmann::json parameters() const override {
    return {{"n_features", net_.w1.rows}, {"hidden_units", net_.w1.cols}, {"w1", net_.w1.data},
            {"b1", net_.b1},              {"w2", net_.w2.data},           {"b2", net_.b2}};
  }

private:
  Layers net_;
};

struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<std::vector<double>> m, v;

  void step(std::vector<std::vector<double>*> params, const std::vector<std::vector<double>>& grads) {
    if (m.empty()) {
      for (const auto& g : grads) {
        m.emplace_back(g.size(), 0.0);
        v.emplace_back(g.size(), 0.0);
      }
    }
    ++t;
    const double rate = lr * std::sqrt(1.0 - std::pow(beta2, static_cast<double>(t))) /
                        (1.0 - std::pow(beta1, static_cast<double>(t)));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& w = *params[p];
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double g = grads[p][k];
        m[p][k] = beta1 * m[p][k] + (1.0 - beta1) * g;
        v[p][k] = beta2 * v[p][k] + (1.0 - beta2) * g * g;
        w[k] -= rate * m[p][k] / (std::sqrt(v[p][k]) + eps);
      }
    }
  }
};

}  // namespace

std::shared_ptr<const Model> fit_mlp(const Matrix& x, std::span<const int> y, FitContext ctx) {
  const auto& hp = ctx.hyperparameters;
  const auto hidden = hp.at("hidden_units").get<std::size_t>();
  const double alpha = hp.at("alpha").get<double>();
  const auto batch = std::min<std::size_t>(hp.at("batch_size").get<std::size_t>(), x.rows);
  const int max_iter = hp.at("max_iter").get<int>();
  const double tol = hp.at("tol").get<double>();
  const int patience = hp.at("n_iter_no_change").get<int>();
  const std::size_t d = x.cols, n = x.rows;

  Rng rng(mix_seed(ctx.seed, 0x3117));
  auto glorot = [&](std::size_t fan_in, std::size_t fan_out, std::vector<double>& values) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : values) v = rng.uniform(-bound, bound);
  };
  Layers net{Matrix(d, hidden), std::vector<double>(hidden), Matrix(hidden, kClasses), std::vector<double>(kClasses)};
  glorot(d, hidden, net.w1.data);
  glorot(d, hidden, net.b1);
  glorot(hidden, kClasses, net.w2.data);
  glorot(hidden, kClasses, net.b2);

  Adam adam;
  adam.lr = hp.at("learning_rate").get<double>();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best_loss = std::numeric_limits<double>::infinity();
  int stale = 0;
  bool converged = false;
  for (int epoch = 0; epoch < max_iter; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const auto rows = std::span<const std::size_t>(order).subspan(start, stop - start);
      const double b = static_cast<double>(rows.size());
      const Matrix xb = x.select_rows(rows);
      const Matrix h = hidden_activations(net, xb);
      Matrix delta = softmax_output(net, h);

      double loss = 0.0;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const int label = y[rows[r]];
        loss -= std::log(std::max(delta(r, label), 1e-300));
        delta(r, label) -= 1.0;
        for (int c = 0; c < kClasses; ++c) delta(r, c) /= b;
      }
      double sq = 0.0;
      for (double w : net.w1.data) sq += w * w;
      for (double w : net.w2.data) sq += w * w;
      loss = loss / b + 0.5 * alpha * sq / b;
      epoch_loss += loss * b;

      Matrix gw2 = kernels::matmul_tn(h, delta);
      std::vector<double> gb2(kClasses, 0.0);
      for (std::size_t r = 0; r < delta.rows; ++r) {
        for (int c = 0; c < kClasses; ++c) gb2[c] += delta(r, c);
      }
      Matrix dh(rows.size(), hidden);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t j = 0; j < hidden; ++j) {
          if (h(r, j) <= 0.0) continue;
          double s = 0.0;
          for (int c = 0; c < kClasses; ++c) s += delta(r, c) * net.w2(j, c);
          dh(r, j) = s;
        }
      }
      Matrix gw1 = kernels::matmul_tn(xb, dh);
      std::vector<double> gb1(hidden, 0.0);
      for (std::size_t r = 0; r < dh.rows; ++r) {
        for (std::size_t j = 0; j < hidden; ++j) gb1[j] += dh(r, j);
      }
      for (std::size_t k = 0; k < gw1.data.size(); ++k) gw1.data[k] += alpha * net.w1.data[k] / b;
      for (std::size_t k = 0; k < gw2.data.size(); ++k) gw2.data[k] += alpha * net.w2.data[k] / b;

      adam.step({&net.w1.data, &net.b1, &net.w2.data, &net.b2},
                {std::move(gw1.data), std::move(gb1), std::move(gw2.data), std::move(gb2)});
    }
    epoch_loss /= static_cast<double>(n);
    if (epoch_loss > best_loss - tol) {
      ++stale;
    } else {
      stale = 0;
    }
    best_loss = std::min(best_loss, epoch_loss);
    if (stale > patience) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    ctx.warnings.push_back("MLP: reached max_iter=" + std::to_string(max_iter) + " without converging");
  }
  return std::make_shared<MlpModel>(std::move(net));
}

std::shared_ptr<const Model> load_mlp(const nlohmann::json& p) {
  const auto d = p.at("n_features").get<std::size_t>();
  const auto hidden = p.at("hidden_units").get<std::size_t>();
  Layers net{Matrix(d, hidden), p.at("b1").get<std::vector<double>>(), Matrix(hidden, kClasses),
             p.at("b2").get<std::vector<double>>()};
  net.w1.data = p.at("w1").get<std::vector<double>>();
  net.w2.data = p.at("w2").get<std::vector<double>>();
  if (net.w1.data.size() != d * hidden || net.w2.data.size() != hidden * kClasses) {
    throw DataError("MLP parameters have inconsistent shapes");
  }
  return std::make_shared<MlpModel>(std::move(net));
}

}  // namespace empathy::models::detail
