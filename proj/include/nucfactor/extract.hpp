#pragma once

// Rank selection and factor extraction from a fitted low-rank matrix.
//
// Each family is handled in its compact form:
//   Unconstrained   a (Np), B (Np x K)
//   Semiparametric  mu (N), phi (p-1), Lambda (N x K), Phi ((p-1) x K)
//   Homogeneous     phi_0 (p), Phi_0 (p x K)
// with F (T x K) in all cases. full_alpha / full_beta expand the compact
// forms to the asset-by-asset layout of the unconstrained model.

#include "nucfactor/prox_apg.hpp"

namespace nucfactor {

struct LowRankFit {
  ModelFamily family;
  Index n_assets = 0;
  DecisionMatrix matrix;
  double lambda_used = 0.0;
  SolverReport report;
};

struct FactorEstimate {
  ModelFamily family;
  Index n_assets = 0;
  Index n_covariates = 0;
  Index n_periods = 0;
  Index k_hat = 0;
  /// a (unconstrained), mu (semiparametric) or phi_0 (homogeneous). Empty
  /// for the zero-alpha variant.
  Vector alpha;
  /// phi (semiparametric only).
  Vector alpha_star;
  /// B, Lambda or Phi_0.
  Matrix beta;
  /// Phi (semiparametric only).
  Matrix beta_star;
  Matrix factors;
  double delta_used = 0.0;
  /// K_hat reached min(rows, T) - 1 of the fitted matrix.
  bool rank_overflow = false;

  double lambda_used = 0.0;
  int solver_iterations = 0;
  bool solver_converged = false;
};

/// Solves the penalized problem and wraps the result.
LowRankFit fit_low_rank(const Panel& panel, ModelFamily family, const SolverConfig& config);

/// Stacked matrix whose demeaned Gram carries the family's eigenvalues:
/// Pi, (Pi_diamond; sqrt(N) Pi_star) or Pi_0.
Matrix extraction_matrix(const DecisionMatrix& g, FamilyKind kind);

/// Eigenvalues of the family Gram matrix (demeaned unless zero_alpha), descending.
Vector gram_eigenvalues(const LowRankFit& fit);

Index select_rank(const LowRankFit& fit, double delta);

/// 2 (Np + T) log N, or 2 (p + T) log(N) / sqrt(N) for the homogeneous family.
double default_delta(const Panel& panel, FamilyKind kind);
double default_delta(Index n, Index t, Index p, FamilyKind kind);

FactorEstimate extract_factors(const LowRankFit& fit, double delta);

/// Extraction with a prescribed number of factors instead of a threshold.
FactorEstimate extract_factors_with_rank(const LowRankFit& fit, Index k);

/// H = (F' M F_est)(F_est' M F_est)^{-1}; M = M_T, or I when `demean` is false
/// (the zero-alpha rotation G).
Matrix rotation_align(const Matrix& f_true, const Matrix& f_est, bool demean = true);

/// Asset-by-asset a (Np) and B (Np x K) implied by any estimate.
Vector full_alpha(const FactorEstimate& est);
Matrix full_beta(const FactorEstimate& est);

}  // namespace nucfactor
