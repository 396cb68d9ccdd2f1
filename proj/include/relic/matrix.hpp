#pragma once
#include <cmath>
#include <cstddef>
#include <vector>

#include "relic/errors.hpp"

namespace relic {

// Dense row-major matrix of doubles. Deliberately minimal: the runtime needs
// predictable, explicitly-ordered arithmetic more than it needs a linear
// algebra library, so the few loops used live next to their call sites.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {
    require(r >= 0 && c >= 0, errc::usage, "matrix dimensions must be nonnegative");
  }

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::fabs(v));
    return m;
  }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

}  // namespace relic
