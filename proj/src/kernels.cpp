#include "empathy/kernels.hpp"

#include <omp.h>

#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <stdexcept>

#include "empathy/rng.hpp"

namespace empathy::kernels {

namespace {
std::atomic<Exec> g_default_exec{Exec::parallel};
}  // namespace

Exec default_exec() { return g_default_exec.load(); }
void set_default_exec(Exec exec) { g_default_exec.store(exec); }

int max_threads() { return omp_get_max_threads(); }

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void check_cols(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw std::invalid_argument("kernel operands differ in width");
}

}  // namespace

Matrix rbf_kernel(const Matrix& a, const Matrix& b, double gamma, Exec exec) {
  check_cols(a, b);
  Matrix out(a.rows, b.rows);
  const auto n = static_cast<std::int64_t>(a.rows);
  if (exec == Exec::serial) {
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < b.rows; ++j) out(i, j) = std::exp(-gamma * squared_distance(a.row(i), b.row(j)));
    }
    return out;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) out(i, j) = std::exp(-gamma * squared_distance(a.row(i), b.row(j)));
  }
  return out;
}

Matrix linear_kernel(const Matrix& a, const Matrix& b, Exec exec) {
  check_cols(a, b);
  Matrix out(a.rows, b.rows);
  const auto n = static_cast<std::int64_t>(a.rows);
  if (exec == Exec::serial) {
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < b.rows; ++j) out(i, j) = dot(a.row(i), b.row(j));
    }
    return out;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) out(i, j) = dot(a.row(i), b.row(j));
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b, Exec exec) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul shape mismatch");
  Matrix out(a.rows, b.cols);
  const auto n = static_cast<std::int64_t>(a.rows);
  auto row_kernel = [&](std::int64_t i) {
    auto o = out.row(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) o[j] += aik * brow[j];
    }
  };
  if (exec == Exec::serial) {
    for (std::int64_t i = 0; i < n; ++i) row_kernel(i);
    return out;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) row_kernel(i);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b, Exec exec) {
  if (a.rows != b.rows) throw std::invalid_argument("matmul_tn shape mismatch");
  Matrix out(a.cols, b.cols);
  const auto n = static_cast<std::int64_t>(a.cols);
  // out row i accumulates over k in ascending order in both paths
  auto row_kernel = [&](std::int64_t i) {
    auto o = out.row(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < a.rows; ++k) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) o[j] += aki * brow[j];
    }
  };
  if (exec == Exec::serial) {
    for (std::int64_t i = 0; i < n; ++i) row_kernel(i);
    return out;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) row_kernel(i);
  return out;
}

void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn, Exec exec) {
  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(empathy_for_each_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

std::vector<double> permutation_importance(const BatchPredictor& predict, const Matrix& x, std::span<const int> y,
                                           int repeats, std::uint64_t seed, Exec exec) {
  if (x.rows != y.size()) throw std::invalid_argument("permutation_importance: rows and labels differ");
  if (repeats < 1) throw std::invalid_argument("permutation_importance: repeats must be >= 1");
  auto accuracy_of = [&](const std::vector<int>& pred) {
    if (y.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i];
    return static_cast<double>(hits) / static_cast<double>(y.size());
  };
  const double baseline = accuracy_of(predict(x));

  std::vector<double> importance(x.cols, 0.0);
  for_each_index(
      x.cols,
      [&](std::size_t f) {
        Matrix permuted = x;
        std::vector<std::size_t> order(x.rows);
        double total_drop = 0.0;
        for (int r = 0; r < repeats; ++r) {
          std::iota(order.begin(), order.end(), std::size_t{0});
          Rng rng(mix_seed(seed, f, static_cast<std::uint64_t>(r)));
          rng.shuffle(std::span<std::size_t>(order));
          for (std::size_t i = 0; i < x.rows; ++i) permuted(i, f) = x(order[i], f);
          total_drop += baseline - accuracy_of(predict(permuted));
        }
        importance[f] = total_drop / static_cast<double>(repeats);
      },
      exec);
  return importance;
}

}  // namespace empathy::kernels
