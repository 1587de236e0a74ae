#include "nucfactor/panel.hpp"

#include <cmath>

#include "nucfactor/errors.hpp"

namespace nucfactor {

Panel::Panel(Matrix y, Mask mask, const std::vector<Matrix>& covariates)
    : y_(std::move(y)), mask_(std::move(mask)) {
  const Index n = y_.rows();
  const Index t_count = y_.cols();
  const Index p = static_cast<Index>(covariates.size());
  if (n < 1 || t_count < 1 || p < 1) fail(ErrorKind::InvalidInput, "panel needs N, T, p >= 1");
  if (mask_.rows() != n || mask_.cols() != t_count)
    fail(ErrorKind::InvalidInput, "mask dimensions do not match returns");
  for (const auto& c : covariates)
    if (c.rows() != n || c.cols() != t_count)
      fail(ErrorKind::InvalidInput, "covariate dimensions do not match returns");

  x_.resize(p, n * t_count);
  for (Index t = 0; t < t_count; ++t) {
    for (Index i = 0; i < n; ++i) {
      const Index col = t * n + i;
      if (!mask_(i, t)) {
        y_(i, t) = 0.0;
        x_.col(col).setZero();
        continue;
      }
      if (!std::isfinite(y_(i, t))) fail(ErrorKind::InvalidInput, "observed return is not finite");
      for (Index k = 0; k < p; ++k) {
        const double v = covariates[static_cast<std::size_t>(k)](i, t);
        if (!std::isfinite(v)) fail(ErrorKind::InvalidInput, "observed covariate is not finite");
        x_(k, col) = v;
      }
      ++observed_;
    }
  }
}

Panel::Panel(Matrix y, const std::vector<Matrix>& covariates)
    : Panel(y, Mask::Constant(y.rows(), y.cols(), true), covariates) {}

Matrix Panel::covariate(Index k) const {
  Matrix out(n_assets(), n_periods());
  for (Index t = 0; t < n_periods(); ++t)
    for (Index i = 0; i < n_assets(); ++i) out(i, t) = x_(k, t * n_assets() + i);
  return out;
}

Panel Panel::without_cells(const Mask& drop) const {
  if (drop.rows() != n_assets() || drop.cols() != n_periods())
    fail(ErrorKind::InvalidInput, "drop mask dimensions do not match panel");
  Panel out = *this;
  for (Index t = 0; t < n_periods(); ++t) {
    for (Index i = 0; i < n_assets(); ++i) {
      if (drop(i, t) && out.mask_(i, t)) {
        out.mask_(i, t) = false;
        out.y_(i, t) = 0.0;
        out.x_.col(t * n_assets() + i).setZero();
        --out.observed_;
      }
    }
  }
  return out;
}

Panel Panel::leading_periods(Index t_end) const {
  if (t_end < 1 || t_end > n_periods()) fail(ErrorKind::InvalidInput, "period range out of bounds");
  Panel out;
  out.y_ = y_.leftCols(t_end);
  out.mask_ = mask_.leftCols(t_end);
  out.x_ = x_.leftCols(t_end * n_assets());
  out.observed_ = out.mask_.count();
  return out;
}

std::string to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Unconstrained: return "unconstrained";
    case FamilyKind::Semiparametric: return "semiparametric";
    case FamilyKind::Homogeneous: return "homogeneous";
  }
  return "unknown";
}

FamilyKind family_from_string(const std::string& name) {
  if (name == "unconstrained") return FamilyKind::Unconstrained;
  if (name == "semiparametric") return FamilyKind::Semiparametric;
  if (name == "homogeneous") return FamilyKind::Homogeneous;
  fail(ErrorKind::ConfigError, "unknown model family '" + name + "'");
}

DecisionMatrix zero_decision(const Panel& panel, FamilyKind kind) {
  const Index n = panel.n_assets();
  const Index t = panel.n_periods();
  const Index p = panel.n_covariates();
  DecisionMatrix g;
  switch (kind) {
    case FamilyKind::Unconstrained:
      g.main = Matrix::Zero(n * p, t);
      break;
    case FamilyKind::Semiparametric:
      g.main = Matrix::Zero(n, t);
      g.star = Matrix::Zero(p - 1, t);
      break;
    case FamilyKind::Homogeneous:
      g.main = Matrix::Zero(p, t);
      break;
  }
  return g;
}

void check_dimensions(const Panel& panel, FamilyKind kind, const DecisionMatrix& g) {
  const DecisionMatrix ref = zero_decision(panel, kind);
  if (g.main.rows() != ref.main.rows() || g.main.cols() != ref.main.cols() ||
      g.star.rows() != ref.star.rows() || (ref.star.size() > 0 && g.star.cols() != ref.star.cols()))
    fail(ErrorKind::InvalidInput, "decision matrix dimensions do not match panel and family");
}

Matrix expand_to_full(const DecisionMatrix& g, FamilyKind kind, Index n_assets) {
  switch (kind) {
    case FamilyKind::Unconstrained:
      return g.main;
    case FamilyKind::Homogeneous:
      return kron_ones(n_assets, g.main);
    case FamilyKind::Semiparametric: {
      const Index p = g.star.rows() + 1;
      Matrix full(n_assets * p, g.main.cols());
      for (Index i = 0; i < n_assets; ++i) {
        full.row(i * p) = g.main.row(i);
        full.middleRows(i * p + 1, p - 1) = g.star;
      }
      return full;
    }
  }
  return {};
}

double fitted_value(const Panel& panel, FamilyKind kind, const DecisionMatrix& g, Index i, Index t) {
  const auto x = panel.x(i, t);
  const Index p = panel.n_covariates();
  switch (kind) {
    case FamilyKind::Unconstrained:
      return x.dot(g.main.col(t).segment(i * p, p));
    case FamilyKind::Homogeneous:
      return x.dot(g.main.col(t));
    case FamilyKind::Semiparametric:
      return x(0) * g.main(i, t) + x.tail(p - 1).dot(g.star.col(t));
  }
  return 0.0;
}

}  // namespace nucfactor
