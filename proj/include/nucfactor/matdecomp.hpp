#pragma once

// Dense decompositions and the nuclear-norm toolbox used by the solver and
// the factor extraction. All functions are pure.

#include <Eigen/Dense>

namespace nucfactor {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thin SVD A = U diag(s) V'. Singular values are descending and every
/// (u_j, v_j) pair carries the canonical sign (see fix_column_signs).
struct Svd {
  Matrix left_vectors;
  Vector singular_values;
  Matrix right_vectors;

  Matrix reconstruct() const;
};

/// The k leading eigenpairs of a symmetric matrix, descending.
struct EigTopK {
  Vector values;
  Matrix vectors;
};

/// Result of singular value soft-thresholding with the quantities the solver
/// needs without a second decomposition.
struct Shrinkage {
  Matrix value;
  double nuclear_norm = 0.0;
  Eigen::Index rank = 0;
};

/// Flip columns so that the entry of largest magnitude in each column of
/// `lead` is positive (ties: lowest row index). The same flips are applied to
/// the matching columns of `follow` when it is non-empty.
void fix_column_signs(Matrix& lead, Matrix* follow = nullptr);

Svd svd(const Matrix& a);

/// U diag(max(0, s_j - x)) V'. Triplets with s_j - x <= 1e-12 are dropped.
Shrinkage soft_threshold(const Matrix& a, double x);
Matrix soft_threshold_singular(const Matrix& a, double x);

double nuclear_norm(const Matrix& a);
double operator_norm(const Matrix& a);

EigTopK eig_top_k(const Matrix& s, Eigen::Index k);

/// All eigenvalues of a symmetric matrix, descending.
Vector eigenvalues_descending(const Matrix& s);

/// 1_k (x) A: k vertical copies of A.
Matrix kron_ones(Eigen::Index k, const Matrix& a);

/// A M_T with M_T = I - 11'/T: each row minus its mean across columns.
Matrix time_demean(const Matrix& a);

/// Throws InvalidInput when any entry is NaN or infinite.
void require_finite(const Matrix& a, const char* what);

}  // namespace nucfactor
