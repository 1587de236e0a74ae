#pragma once

// Panel data, model families and the family-native decision matrix.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nucfactor/matdecomp.hpp"

namespace nucfactor {

using Index = Eigen::Index;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Asset returns y (N x T), an observation mask and covariates x_it (p each).
///
/// Covariates are stored as a p x (N*T) matrix whose column t*N + i is x_it,
/// so every x_it is a contiguous vector. Masked cells are canonicalized to
/// y = 0 and x = 0 at construction, which makes every loss term of a masked
/// cell vanish identically.
class Panel {
 public:
  Panel() = default;

  /// `covariates[k]` is the N x T matrix of the k-th covariate. Entries of
  /// masked cells may hold anything (including NaN).
  Panel(Matrix y, Mask mask, const std::vector<Matrix>& covariates);

  /// Fully observed panel.
  Panel(Matrix y, const std::vector<Matrix>& covariates);

  Index n_assets() const { return y_.rows(); }
  Index n_periods() const { return y_.cols(); }
  Index n_covariates() const { return x_.rows(); }
  Index observed_count() const { return observed_; }

  const Matrix& y() const { return y_; }
  const Mask& mask() const { return mask_; }
  bool observed(Index i, Index t) const { return mask_(i, t); }
  double y(Index i, Index t) const { return y_(i, t); }

  auto x(Index i, Index t) const { return x_.col(t * y_.rows() + i); }
  const Matrix& covariate_block() const { return x_; }

  /// N x T matrix of covariate k.
  Matrix covariate(Index k) const;

  /// Copy with the cells where `drop` is true additionally masked.
  Panel without_cells(const Mask& drop) const;

  /// Copy restricted to periods [0, t_end).
  Panel leading_periods(Index t_end) const;

 private:
  Matrix y_;
  Mask mask_;
  Matrix x_;
  Index observed_ = 0;
};

enum class FamilyKind { Unconstrained, Semiparametric, Homogeneous };

std::string to_string(FamilyKind kind);
FamilyKind family_from_string(const std::string& name);

struct ModelFamily {
  FamilyKind kind = FamilyKind::Unconstrained;
  bool zero_alpha = false;

  friend bool operator==(const ModelFamily&, const ModelFamily&) = default;
};

/// The unknown of the regularized problem on the original covariate scale.
///
///  * Unconstrained:  main is Np x T (row block i holds gamma_it), star empty.
///  * Semiparametric: main is N x T (asset-specific intercept part), star is
///                    (p-1) x T (the homogeneous part, unscaled).
///  * Homogeneous:    main is p x T, star empty.
struct DecisionMatrix {
  Matrix main;
  Matrix star;
};

DecisionMatrix zero_decision(const Panel& panel, FamilyKind kind);

/// Throws InvalidInput unless `g` has the family's dimensions for `panel`.
void check_dimensions(const Panel& panel, FamilyKind kind, const DecisionMatrix& g);

/// The implied Np x T matrix Pi of the general model for any family.
Matrix expand_to_full(const DecisionMatrix& g, FamilyKind kind, Index n_assets);

/// Fitted value tr(X_it' Gamma) for cell (i, t) using x_it from `panel`.
double fitted_value(const Panel& panel, FamilyKind kind, const DecisionMatrix& g, Index i, Index t);

}  // namespace nucfactor
