#include "empathy/models/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace empathy::models {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& objective, std::vector<double> x0, const LbfgsOptions& options) {
  const std::size_t n = x0.size();
  LbfgsResult result;
  result.x = std::move(x0);
  std::vector<double> grad(n), new_grad(n), direction(n), candidate(n);
  double value = objective(result.x, grad);

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> history;
  std::vector<double> alpha(static_cast<std::size_t>(options.memory));

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter;
    if (max_abs(grad) < options.gradient_tolerance) {
      result.converged = true;
      break;
    }

    // two-loop recursion: direction = -H * grad
    std::copy(grad.begin(), grad.end(), direction.begin());
    for (std::size_t k = history.size(); k-- > 0;) {
      const auto& p = history[k];
      alpha[k] = p.rho * dot(p.s, direction);
      for (std::size_t i = 0; i < n; ++i) direction[i] -= alpha[k] * p.y[i];
    }
    double gamma = 1.0;
    if (!history.empty()) {
      const auto& last = history.back();
      gamma = dot(last.s, last.y) / dot(last.y, last.y);
    } else {
      const double gnorm = std::sqrt(dot(grad, grad));
      gamma = gnorm > 0.0 ? 1.0 / gnorm : 1.0;
    }
    for (double& d : direction) d *= gamma;
    for (std::size_t k = 0; k < history.size(); ++k) {
      const auto& p = history[k];
      const double beta = p.rho * dot(p.y, direction);
      for (std::size_t i = 0; i < n; ++i) direction[i] += p.s[i] * (alpha[k] - beta);
    }
    for (double& d : direction) d = -d;

    double slope = dot(grad, direction);
    if (slope >= 0.0) {
      // not a descent direction; fall back to steepest descent
      history.clear();
      const double gnorm = std::sqrt(dot(grad, grad));
      for (std::size_t i = 0; i < n; ++i) direction[i] = -grad[i] / std::max(gnorm, 1e-300);
      slope = dot(grad, direction);
    }

    double step = 1.0;
    double new_value = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < n; ++i) candidate[i] = result.x[i] + step * direction[i];
      new_value = objective(candidate, new_grad);
      if (std::isfinite(new_value) && new_value <= value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.converged = max_abs(grad) < std::sqrt(options.gradient_tolerance);
      break;
    }

    Pair p;
    p.s.resize(n);
    p.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      p.s[i] = candidate[i] - result.x[i];
      p.y[i] = new_grad[i] - grad[i];
    }
    const double sy = dot(p.s, p.y);
    const double previous = value;
    result.x.swap(candidate);
    grad.swap(new_grad);
    value = new_value;
    if (sy > 1e-12) {
      p.rho = 1.0 / sy;
      history.push_back(std::move(p));
      if (history.size() > static_cast<std::size_t>(options.memory)) history.pop_front();
    }
    if (std::abs(previous - value) <= options.relative_tolerance * std::max({std::abs(previous), std::abs(value), 1.0})) {
      result.iterations = iter + 1;
      result.converged = true;
      break;
    }
    result.iterations = iter + 1;
  }
  result.value = value;
  return result;
}

}  // namespace empathy::models
