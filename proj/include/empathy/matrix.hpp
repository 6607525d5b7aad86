#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace empathy {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  Matrix select_columns(std::span<const std::size_t> columns) const {
    Matrix out(rows, columns.size());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < columns.size(); ++k) out(r, k) = (*this)(r, columns[k]);
    }
    return out;
  }

  Matrix select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const auto src = row(indices[k]);
      std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
  }

  bool operator==(const Matrix&) const = default;
};

}  // namespace empathy
