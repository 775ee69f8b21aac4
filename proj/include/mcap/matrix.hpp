#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mcap/common.hpp"

namespace mcap::num {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Vectors are stored as n x 1.
struct Matrix {
  int rows = 0;
  int cols = 0;
  Vec v;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {
    if (r < 0 || c < 0) throw ShapeError("Matrix: negative dimension");
  }

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

  double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

  size_t size() const { return v.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }
  void zero() { fill(0.0); }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline void require_shape(const Matrix& m, int rows, int cols, const std::string& name) {
  if (m.rows != rows || m.cols != cols)
    throw ShapeError(name + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                     ", got " + std::to_string(m.rows) + "x" + std::to_string(m.cols));
}

inline void require_len(size_t got, size_t want, const std::string& name) {
  if (got != want)
    throw ShapeError(name + ": expected length " + std::to_string(want) + ", got " +
                     std::to_string(got));
}

}  // namespace mcap::num
