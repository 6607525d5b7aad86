#pragma once

#include <functional>
#include <span>
#include <vector>

namespace empathy::models {

struct LbfgsOptions {
  int max_iterations = 1000;
  int memory = 10;
  double gradient_tolerance = 1e-6;  ///< stop when max |g_i| falls below
  double relative_tolerance = 1e-12; ///< stop when the objective stalls
};

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Objective writes the gradient into `grad` and returns the value.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

/// Limited-memory BFGS with Armijo backtracking. Deterministic.
LbfgsResult lbfgs_minimize(const Objective& objective, std::vector<double> x0, const LbfgsOptions& options = {});

}  // namespace empathy::models
