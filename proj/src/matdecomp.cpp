#include "nucfactor/matdecomp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nucfactor/errors.hpp"

namespace nucfactor {

namespace {

constexpr double kShrinkCutoff = 1e-12;

// Tall inputs are reduced by a Householder QR first so the bidiagonal SVD
// only runs on the small square factor.
void thin_svd(const Matrix& a, Matrix& u, Vector& s, Matrix& v) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  if (m == 0 || n == 0) {
    u.resize(m, 0);
    s.resize(0);
    v.resize(n, 0);
    return;
  }
  if (m >= 2 * n) {
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    Eigen::BDCSVD<Matrix> inner(r, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Matrix q = qr.householderQ() * Matrix::Identity(m, n);
    u = q * inner.matrixU();
    s = inner.singularValues();
    v = inner.matrixV();
    return;
  }
  if (n >= 2 * m) {
    thin_svd(a.transpose(), v, s, u);
    return;
  }
  Eigen::BDCSVD<Matrix> full(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  u = full.matrixU();
  s = full.singularValues();
  v = full.matrixV();
}

}  // namespace

Matrix Svd::reconstruct() const {
  return left_vectors * singular_values.asDiagonal() * right_vectors.transpose();
}

void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) fail(ErrorKind::InvalidInput, std::string(what) + " has non-finite entries");
}

void fix_column_signs(Matrix& lead, Matrix* follow) {
  for (Eigen::Index j = 0; j < lead.cols(); ++j) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < lead.rows(); ++i) {
      const double v = std::abs(lead(i, j));
      if (v > best_abs) {
        best_abs = v;
        best = i;
      }
    }
    if (lead.rows() > 0 && lead(best, j) < 0.0) {
      lead.col(j) *= -1.0;
      if (follow != nullptr && follow->cols() > j) follow->col(j) *= -1.0;
    }
  }
}

Svd svd(const Matrix& a) {
  require_finite(a, "svd input");
  Svd out;
  thin_svd(a, out.left_vectors, out.singular_values, out.right_vectors);
  fix_column_signs(out.left_vectors, &out.right_vectors);
  return out;
}

namespace {

// Retained singular values at or above this fraction of sigma_1 keep the
// Gram-based vectors accurate to roughly eps / ratio^2.
constexpr double kGramRatio = 1e-4;

// Shrinkage through the eigen-decomposition of the smaller Gram matrix. Returns
// false (and leaves `out` untouched) when x is too small relative to sigma_1
// for this route to be accurate.
bool gram_soft_threshold(const Matrix& a, double x, Shrinkage& out) {
  const bool tall = a.rows() >= a.cols();
  const Matrix gram = tall ? Matrix(a.transpose() * a) : Matrix(a * a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  const Vector ev = es.eigenvalues().reverse();
  const double s1 = std::sqrt(std::max(ev(0), 0.0));
  if (x < kGramRatio * s1) return false;

  Eigen::Index keep = 0;
  while (keep < ev.size() && std::sqrt(std::max(ev(keep), 0.0)) - x > kShrinkCutoff) ++keep;
  out.rank = keep;
  if (keep == 0) {
    out.value = Matrix::Zero(a.rows(), a.cols());
    out.nuclear_norm = 0.0;
    return true;
  }
  const Vector sigma = ev.head(keep).cwiseSqrt();
  const Matrix vecs = es.eigenvectors().rightCols(keep).rowwise().reverse();
  const Vector shrunk = sigma.array() - x;
  const Vector ratio = shrunk.cwiseQuotient(sigma);
  out.nuclear_norm = shrunk.sum();
  // With A = U S V': shrunk part = A V diag(1 - x/s) V' (tall) or
  // U diag(1 - x/s) U' A (wide).
  if (tall) {
    out.value = (a * vecs) * ratio.asDiagonal() * vecs.transpose();
  } else {
    out.value = vecs * ratio.asDiagonal() * (vecs.transpose() * a);
  }
  return true;
}

}  // namespace

Shrinkage soft_threshold(const Matrix& a, double x) {
  if (!(x > 0.0)) fail(ErrorKind::InvalidInput, "soft-threshold level must be positive");
  require_finite(a, "soft_threshold input");
  Shrinkage out;
  if (a.size() == 0) {
    out.value = a;
    return out;
  }
  if (gram_soft_threshold(a, x, out)) return out;

  const Svd d = svd(a);
  Eigen::Index keep = 0;
  while (keep < d.singular_values.size() && d.singular_values(keep) - x > kShrinkCutoff) ++keep;
  out.rank = keep;
  if (keep == 0) {
    out.value = Matrix::Zero(a.rows(), a.cols());
    return out;
  }
  const Vector shrunk = d.singular_values.head(keep).array() - x;
  out.nuclear_norm = shrunk.sum();
  out.value = d.left_vectors.leftCols(keep) * shrunk.asDiagonal() *
              d.right_vectors.leftCols(keep).transpose();
  return out;
}

Matrix soft_threshold_singular(const Matrix& a, double x) { return soft_threshold(a, x).value; }

double nuclear_norm(const Matrix& a) {
  require_finite(a, "nuclear_norm input");
  Matrix u, v;
  Vector s;
  thin_svd(a, u, s, v);
  return s.sum();
}

double operator_norm(const Matrix& a) {
  require_finite(a, "operator_norm input");
  if (a.size() == 0) return 0.0;
  Matrix u, v;
  Vector s;
  thin_svd(a, u, s, v);
  return s(0);
}

namespace {

void require_symmetric(const Matrix& s) {
  if (s.rows() != s.cols()) fail(ErrorKind::InvalidInput, "matrix is not square");
  require_finite(s, "symmetric input");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    fail(ErrorKind::InvalidInput, "matrix is not symmetric");
}

}  // namespace

Vector eigenvalues_descending(const Matrix& s) {
  require_symmetric(s);
  if (s.size() == 0) return Vector();
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

EigTopK eig_top_k(const Matrix& s, Eigen::Index k) {
  require_symmetric(s);
  if (k < 0 || k > s.rows()) fail(ErrorKind::InvalidInput, "eig_top_k: k out of range");
  EigTopK out;
  if (k == 0) {
    out.values.resize(0);
    out.vectors.resize(s.rows(), 0);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  // The solver returns ascending values; reversing keeps tie order stable.
  out.values = es.eigenvalues().tail(k).reverse();
  out.vectors = es.eigenvectors().rightCols(k).rowwise().reverse();
  fix_column_signs(out.vectors);
  return out;
}

Matrix kron_ones(Eigen::Index k, const Matrix& a) {
  Matrix out(k * a.rows(), a.cols());
  for (Eigen::Index b = 0; b < k; ++b) out.middleRows(b * a.rows(), a.rows()) = a;
  return out;
}

Matrix time_demean(const Matrix& a) {
  if (a.cols() == 0) return a;
  return a.colwise() - a.rowwise().mean();
}

}  // namespace nucfactor
