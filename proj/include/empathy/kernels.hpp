#pragma once

// Data-parallel hot loops. Every kernel has a serial reference path and an
// OpenMP path. Work is split only over independent outputs (rows, features,
// trees), never over a floating-point reduction, so both paths produce
// bit-identical results regardless of thread count.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "empathy/matrix.hpp"

namespace empathy::kernels {

enum class Exec { serial, parallel };

/// Policy used by model code that does not take an explicit Exec.
Exec default_exec();
void set_default_exec(Exec exec);

/// Restores the previous default on scope exit.
class ExecScope {
public:
  explicit ExecScope(Exec exec) : previous_(default_exec()) { set_default_exec(exec); }
  ~ExecScope() { set_default_exec(previous_); }
  ExecScope(const ExecScope&) = delete;
  ExecScope& operator=(const ExecScope&) = delete;

private:
  Exec previous_;
};

int max_threads();

/// out(i, j) = exp(-gamma * ||a_i - b_j||^2)
Matrix rbf_kernel(const Matrix& a, const Matrix& b, double gamma, Exec exec = default_exec());

/// out(i, j) = a_i . b_j
Matrix linear_kernel(const Matrix& a, const Matrix& b, Exec exec = default_exec());

/// out = a * b   (a: n x k, b: k x m)
Matrix matmul(const Matrix& a, const Matrix& b, Exec exec = default_exec());

/// out = a^T * b (a: k x n, b: k x m)
Matrix matmul_tn(const Matrix& a, const Matrix& b, Exec exec = default_exec());

/// Predicts a label index (0-based) per row.
using BatchPredictor = std::function<std::vector<int>(const Matrix&)>;

/// Mean accuracy drop over `repeats` seeded shuffles of each column.
/// Shuffle (feature f, repeat r) uses the stream mix_seed(seed, f, r). The
/// predictor must be safe to call concurrently.
std::vector<double> permutation_importance(const BatchPredictor& predict, const Matrix& x,
                                           std::span<const int> y, int repeats, std::uint64_t seed,
                                           Exec exec = default_exec());

/// Calls fn(i) for i in [0, n); fn must only write to slot i of its outputs.
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn, Exec exec = default_exec());

}  // namespace empathy::kernels
