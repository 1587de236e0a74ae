#pragma once

#include <random>
#include <vector>

#include "nucfactor/panel.hpp"

namespace testing {

using nucfactor::Index;
using nucfactor::Mask;
using nucfactor::Matrix;
using nucfactor::Panel;
using nucfactor::Vector;

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = d(rng);
  return m;
}

// Random panel; the first covariate is the constant 1 when `intercept`.
// Roughly `missing` of the cells are masked (at least one stays observed).
inline Panel random_panel(Index n, Index t, Index p, std::uint64_t seed, double missing = 0.0, bool intercept = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Matrix> x;
  for (Index k = 0; k < p; ++k)
    x.push_back(k == 0 && intercept ? Matrix::Ones(n, t) : random_matrix(n, t, rng));
  Matrix y = random_matrix(n, t, rng, 2.0);
  Mask mask(n, t);
  for (Index j = 0; j < t; ++j)
    for (Index i = 0; i < n; ++i) mask(i, j) = u(rng) >= missing;
  mask(0, 0) = true;
  return Panel(y, mask, x);
}

inline double rel_diff(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

// Flip columns of `a` to best match the columns of `b`.
inline Matrix align_signs(Matrix a, const Matrix& b) {
  for (Index j = 0; j < a.cols(); ++j)
    if (a.col(j).dot(b.col(j)) < 0.0) a.col(j) *= -1.0;
  return a;
}

}  // namespace testing
