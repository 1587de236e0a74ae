#pragma once

// Smooth least-squares losses of the three model families, their gradients
// and Lipschitz constants.
//
// The solver works on one "stacked" matrix per family:
//   Unconstrained   Np x T        (Gamma itself)
//   Semiparametric  (N+p-1) x T   (Gamma_diamond stacked on sqrt(N) Gamma_star)
//   Homogeneous     p x T         (Gamma_0)
// so that the nuclear-norm penalty is always the plain nuclear norm of the
// stacked matrix. The public DecisionMatrix keeps the original scale.

#include "nucfactor/panel.hpp"

namespace nucfactor {

class Problem {
 public:
  /// `panel` must outlive the Problem.
  Problem(const Panel& panel, ModelFamily family);

  const Panel& panel() const { return *panel_; }
  ModelFamily family() const { return family_; }
  FamilyKind kind() const { return family_.kind; }

  Index stacked_rows() const;
  Index stacked_cols() const { return panel_->n_periods(); }

  Matrix to_stacked(const DecisionMatrix& g) const;
  DecisionMatrix from_stacked(const Matrix& z) const;

  /// Loss and gradient in stacked coordinates. The column loop runs under
  /// OpenMP; per-column partial sums are reduced in column order so the result
  /// does not depend on the thread count.
  double stacked_loss(const Matrix& z) const;
  Matrix stacked_gradient(const Matrix& z) const;

  /// Single-threaded reference kernels, kept for testing and benchmarking.
  double stacked_loss_serial(const Matrix& z) const;
  Matrix stacked_gradient_serial(const Matrix& z) const;

  /// Loss and gradient with respect to the original-scale DecisionMatrix.
  double loss(const DecisionMatrix& g) const;
  DecisionMatrix gradient(const DecisionMatrix& g) const;

  /// Lipschitz constant of the stacked gradient, computed once at
  /// construction over observed cells.
  double lipschitz() const { return lipschitz_; }

  /// Unpenalized fit: per-cell (unconstrained), per-column with free
  /// asset intercepts (semiparametric, in stacked coordinates) or per-column
  /// (homogeneous) minimum-norm least squares.
  DecisionMatrix least_squares() const;

 private:
  void column_terms(const Matrix& z, Index t, double* loss, Matrix* grad) const;

  const Panel* panel_;
  ModelFamily family_;
  double sqrt_n_ = 1.0;
  double lipschitz_ = 0.0;
};

double loss(const Panel& panel, ModelFamily family, const DecisionMatrix& g);
DecisionMatrix gradient(const Panel& panel, ModelFamily family, const DecisionMatrix& g);
double lipschitz_constant(const Panel& panel, ModelFamily family);

}  // namespace nucfactor
