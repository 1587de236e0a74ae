#include "nucfactor/problems.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "nucfactor/errors.hpp"

namespace nucfactor {

namespace {

// Below this many observed cells the OpenMP fork costs more than it saves.
constexpr Index kParallelCells = 4096;

double max_eigenvalue(const Matrix& s) {
  if (s.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace

Problem::Problem(const Panel& panel, ModelFamily family) : panel_(&panel), family_(family) {
  const Index n = panel.n_assets();
  const Index t_count = panel.n_periods();
  const Index p = panel.n_covariates();
  sqrt_n_ = std::sqrt(static_cast<double>(n));
  if (panel.observed_count() == 0) fail(ErrorKind::DegenerateInput, "every cell of the panel is masked");

  if (family.kind == FamilyKind::Semiparametric) {
    if (p < 2) fail(ErrorKind::InvalidInput, "semiparametric family needs p >= 2");
    for (Index t = 0; t < t_count; ++t)
      for (Index i = 0; i < n; ++i)
        if (panel.observed(i, t) && panel.x(i, t)(0) != 1.0)
          fail(ErrorKind::InvalidInput, "semiparametric family needs x_it1 == 1 on observed cells");
  }

  switch (family.kind) {
    case FamilyKind::Unconstrained: {
      double best = 0.0;
      for (Index t = 0; t < t_count; ++t)
        for (Index i = 0; i < n; ++i)
          if (panel.observed(i, t)) best = std::max(best, panel.x(i, t).squaredNorm());
      lipschitz_ = best;
      break;
    }
    case FamilyKind::Semiparametric: {
      double max_star = 0.0;
      double max_lambda = 0.0;
      for (Index t = 0; t < t_count; ++t) {
        Matrix s = Matrix::Zero(p - 1, p - 1);
        for (Index i = 0; i < n; ++i) {
          if (!panel.observed(i, t)) continue;
          const auto xs = panel.x(i, t).tail(p - 1);
          max_star = std::max(max_star, xs.squaredNorm());
          s.noalias() += xs * xs.transpose();
        }
        max_lambda = std::max(max_lambda, max_eigenvalue(s / static_cast<double>(n)));
      }
      lipschitz_ = std::sqrt(2.0) *
                   std::sqrt(std::max(1.0 + max_star, max_lambda + max_lambda * max_lambda));
      break;
    }
    case FamilyKind::Homogeneous: {
      double best = 0.0;
      for (Index t = 0; t < t_count; ++t) {
        Matrix s = Matrix::Zero(p, p);
        for (Index i = 0; i < n; ++i)
          if (panel.observed(i, t)) s.noalias() += panel.x(i, t) * panel.x(i, t).transpose();
        best = std::max(best, max_eigenvalue(s));
      }
      lipschitz_ = best;
      break;
    }
  }
  if (!(lipschitz_ > 0.0)) fail(ErrorKind::DegenerateInput, "loss has zero curvature (all observed covariates vanish)");
}

Index Problem::stacked_rows() const {
  const Index n = panel_->n_assets();
  const Index p = panel_->n_covariates();
  switch (family_.kind) {
    case FamilyKind::Unconstrained: return n * p;
    case FamilyKind::Semiparametric: return n + p - 1;
    case FamilyKind::Homogeneous: return p;
  }
  return 0;
}

Matrix Problem::to_stacked(const DecisionMatrix& g) const {
  check_dimensions(*panel_, family_.kind, g);
  if (family_.kind != FamilyKind::Semiparametric) return g.main;
  Matrix z(stacked_rows(), stacked_cols());
  z.topRows(g.main.rows()) = g.main;
  z.bottomRows(g.star.rows()) = sqrt_n_ * g.star;
  return z;
}

DecisionMatrix Problem::from_stacked(const Matrix& z) const {
  if (z.rows() != stacked_rows() || z.cols() != stacked_cols())
    fail(ErrorKind::InvalidInput, "stacked matrix has wrong dimensions");
  DecisionMatrix g;
  if (family_.kind != FamilyKind::Semiparametric) {
    g.main = z;
    return g;
  }
  const Index n = panel_->n_assets();
  g.main = z.topRows(n);
  g.star = z.bottomRows(z.rows() - n) / sqrt_n_;
  return g;
}

void Problem::column_terms(const Matrix& z, Index t, double* loss, Matrix* grad) const {
  const Panel& pn = *panel_;
  const Index n = pn.n_assets();
  const Index p = pn.n_covariates();
  double acc = 0.0;
  switch (family_.kind) {
    case FamilyKind::Unconstrained:
      for (Index i = 0; i < n; ++i) {
        const auto x = pn.x(i, t);
        const double r = pn.y(i, t) - x.dot(z.col(t).segment(i * p, p));
        acc += r * r;
        if (grad) grad->col(t).segment(i * p, p) = -r * x;
      }
      break;
    case FamilyKind::Semiparametric: {
      const auto zs = z.col(t).tail(p - 1);
      Vector gs = Vector::Zero(p - 1);
      for (Index i = 0; i < n; ++i) {
        const auto x = pn.x(i, t);
        const double r = pn.y(i, t) - x(0) * z(i, t) - x.tail(p - 1).dot(zs) / sqrt_n_;
        acc += r * r;
        if (grad) {
          (*grad)(i, t) = -x(0) * r;
          gs.noalias() -= (r / sqrt_n_) * x.tail(p - 1);
        }
      }
      if (grad) grad->col(t).tail(p - 1) = gs;
      break;
    }
    case FamilyKind::Homogeneous: {
      Vector g = Vector::Zero(p);
      for (Index i = 0; i < n; ++i) {
        const auto x = pn.x(i, t);
        const double r = pn.y(i, t) - x.dot(z.col(t));
        acc += r * r;
        if (grad) g.noalias() -= r * x;
      }
      if (grad) grad->col(t) = g;
      break;
    }
  }
  *loss = 0.5 * acc;
}

double Problem::stacked_loss(const Matrix& z) const {
  const Index t_count = stacked_cols();
  std::vector<double> parts(static_cast<std::size_t>(t_count), 0.0);
  const bool wide = panel_->observed_count() >= kParallelCells;
#pragma omp parallel for schedule(static) if (wide)
  for (Index t = 0; t < t_count; ++t) column_terms(z, t, &parts[static_cast<std::size_t>(t)], nullptr);
  double total = 0.0;
  for (double v : parts) total += v;
  return total;
}

Matrix Problem::stacked_gradient(const Matrix& z) const {
  const Index t_count = stacked_cols();
  Matrix grad(stacked_rows(), t_count);
  const bool wide = panel_->observed_count() >= kParallelCells;
#pragma omp parallel for schedule(static) if (wide)
  for (Index t = 0; t < t_count; ++t) {
    double unused = 0.0;
    column_terms(z, t, &unused, &grad);
  }
  return grad;
}

double Problem::stacked_loss_serial(const Matrix& z) const {
  double total = 0.0;
  for (Index t = 0; t < stacked_cols(); ++t) {
    double part = 0.0;
    column_terms(z, t, &part, nullptr);
    total += part;
  }
  return total;
}

Matrix Problem::stacked_gradient_serial(const Matrix& z) const {
  Matrix grad(stacked_rows(), stacked_cols());
  for (Index t = 0; t < stacked_cols(); ++t) {
    double unused = 0.0;
    column_terms(z, t, &unused, &grad);
  }
  return grad;
}

double Problem::loss(const DecisionMatrix& g) const { return stacked_loss(to_stacked(g)); }

DecisionMatrix Problem::gradient(const DecisionMatrix& g) const {
  // d/dGamma_star = sqrt(N) d/dZ_star; from_stacked divides by sqrt(N), so
  // pre-multiply the star rows by N.
  Matrix grad = stacked_gradient(to_stacked(g));
  if (family_.kind == FamilyKind::Semiparametric) {
    const Index n = panel_->n_assets();
    grad.bottomRows(grad.rows() - n) *= static_cast<double>(n);
  }
  return from_stacked(grad);
}

DecisionMatrix Problem::least_squares() const {
  const Panel& pn = *panel_;
  const Index n = pn.n_assets();
  const Index p = pn.n_covariates();
  const Index t_count = pn.n_periods();
  Matrix z = Matrix::Zero(stacked_rows(), t_count);

  for (Index t = 0; t < t_count; ++t) {
    std::vector<Index> rows;
    for (Index i = 0; i < n; ++i)
      if (pn.observed(i, t)) rows.push_back(i);
    const Index m = static_cast<Index>(rows.size());
    if (m == 0) continue;

    switch (family_.kind) {
      case FamilyKind::Unconstrained:
        for (Index i : rows) {
          const auto x = pn.x(i, t);
          const double xx = x.squaredNorm();
          if (xx > 0.0) z.col(t).segment(i * p, p) = (pn.y(i, t) / xx) * x;
        }
        break;
      case FamilyKind::Semiparametric: {
        // Observed rows read z_it + w_it' z_star = y_it with w = x_star / sqrt(N);
        // the minimum-norm solution is z = A'(AA')^{-1} y with A = [I W].
        Matrix w(m, p - 1);
        Vector yt(m);
        for (Index r = 0; r < m; ++r) {
          w.row(r) = pn.x(rows[r], t).tail(p - 1).transpose() / sqrt_n_;
          yt(r) = pn.y(rows[r], t);
        }
        Matrix gram = w * w.transpose();
        gram.diagonal().array() += 1.0;
        const Vector c = gram.llt().solve(yt);
        for (Index r = 0; r < m; ++r) z(rows[r], t) = c(r);
        z.col(t).tail(p - 1) = w.transpose() * c;
        break;
      }
      case FamilyKind::Homogeneous: {
        Matrix x(m, p);
        Vector yt(m);
        for (Index r = 0; r < m; ++r) {
          x.row(r) = pn.x(rows[r], t).transpose();
          yt(r) = pn.y(rows[r], t);
        }
        z.col(t) = x.completeOrthogonalDecomposition().solve(yt);
        break;
      }
    }
  }
  return from_stacked(z);
}

double loss(const Panel& panel, ModelFamily family, const DecisionMatrix& g) {
  return Problem(panel, family).loss(g);
}

DecisionMatrix gradient(const Panel& panel, ModelFamily family, const DecisionMatrix& g) {
  return Problem(panel, family).gradient(g);
}

double lipschitz_constant(const Panel& panel, ModelFamily family) {
  return Problem(panel, family).lipschitz();
}

}  // namespace nucfactor
