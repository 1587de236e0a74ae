#include "nucfactor/extract.hpp"

#include <cmath>

#include "nucfactor/errors.hpp"

namespace nucfactor {

namespace {

Index infer_assets(const LowRankFit& fit) {
  if (fit.family.kind == FamilyKind::Semiparametric) return fit.matrix.main.rows();
  return -1;
}

Matrix gram_source(const LowRankFit& fit) {
  const Matrix z = extraction_matrix(fit.matrix, fit.family.kind);
  return fit.family.zero_alpha ? z : time_demean(z);
}

Vector squared_singular_values(const Matrix& a) {
  if (a.size() == 0) return Vector();
  Eigen::BDCSVD<Matrix> d(a);
  return d.singularValues().array().square();
}

FactorEstimate extract_impl(const LowRankFit& fit, Index k, Index n_assets_hint) {
  const FamilyKind kind = fit.family.kind;
  const bool zero_alpha = fit.family.zero_alpha;
  const DecisionMatrix& g = fit.matrix;
  require_finite(g.main, "fit matrix");
  const Matrix z = extraction_matrix(g, kind);
  const Index t_count = z.cols();

  FactorEstimate est;
  est.family = fit.family;
  est.n_periods = t_count;
  est.k_hat = k;
  est.lambda_used = fit.lambda_used;
  est.solver_iterations = fit.report.iterations;
  est.solver_converged = fit.report.converged;
  est.rank_overflow = k >= std::min(z.rows(), t_count) - 1;

  const Vector mean = z.rowwise().mean();
  Matrix u(z.rows(), 0);
  if (k > 0) {
    const Svd d = svd(zero_alpha ? z : time_demean(z));
    u = d.left_vectors.leftCols(k);
  }

  switch (kind) {
    case FamilyKind::Unconstrained: {
      const Index n = n_assets_hint;
      const double sn = std::sqrt(static_cast<double>(n));
      est.n_assets = n;
      est.n_covariates = z.rows() / n;
      est.beta = sn * u;
      est.factors = z.transpose() * u / sn;
      if (!zero_alpha) est.alpha = mean - u * (u.transpose() * mean);
      break;
    }
    case FamilyKind::Semiparametric: {
      const Index n = g.main.rows();
      const Index q = g.star.rows();
      const double nn = static_cast<double>(n);
      const double sn = std::sqrt(nn);
      est.n_assets = n;
      est.n_covariates = q + 1;
      est.beta = sn * u.topRows(n);
      est.beta_star = u.bottomRows(q);
      est.factors = g.main.transpose() * est.beta / nn + g.star.transpose() * est.beta_star;
      if (!zero_alpha) {
        const Vector m_main = g.main.rowwise().mean();
        const Vector m_star = g.star.rowwise().mean();
        const Matrix& lam = est.beta;
        const Matrix& phi = est.beta_star;
        est.alpha = m_main - lam * (lam.transpose() * m_main) / nn - lam * (phi.transpose() * m_star);
        est.alpha_star = m_star - phi * (phi.transpose() * m_star) - phi * (lam.transpose() * m_main) / nn;
      }
      break;
    }
    case FamilyKind::Homogeneous: {
      est.n_assets = n_assets_hint;
      est.n_covariates = z.rows();
      est.beta = u;
      est.factors = z.transpose() * u;
      if (!zero_alpha) est.alpha = mean - u * (u.transpose() * mean);
      break;
    }
  }
  if (k == 0) est.factors.resize(t_count, 0);
  return est;
}

}  // namespace

LowRankFit fit_low_rank(const Panel& panel, ModelFamily family, const SolverConfig& config) {
  SolveResult r = solve(panel, family, config);
  return LowRankFit{family, panel.n_assets(), std::move(r.solution), config.lambda, std::move(r.report)};
}

Matrix extraction_matrix(const DecisionMatrix& g, FamilyKind kind) {
  if (kind != FamilyKind::Semiparametric) return g.main;
  const double sn = std::sqrt(static_cast<double>(g.main.rows()));
  Matrix z(g.main.rows() + g.star.rows(), g.main.cols());
  z.topRows(g.main.rows()) = g.main;
  z.bottomRows(g.star.rows()) = sn * g.star;
  return z;
}

Vector gram_eigenvalues(const LowRankFit& fit) {
  require_finite(fit.matrix.main, "fit matrix");
  return squared_singular_values(gram_source(fit));
}

Index select_rank(const LowRankFit& fit, double delta) {
  if (!(delta > 0.0)) fail(ErrorKind::InvalidInput, "delta must be positive");
  const Vector ev = gram_eigenvalues(fit);
  Index k = 0;
  while (k < ev.size() && ev(k) >= delta) ++k;
  return k;
}

double default_delta(Index n, Index t, Index p, FamilyKind kind) {
  if (n < 2) fail(ErrorKind::DegenerateInput, "default delta needs N >= 2");
  const double nn = static_cast<double>(n);
  const double log_n = std::log(nn);
  if (kind == FamilyKind::Homogeneous)
    return 2.0 * static_cast<double>(p + t) * log_n / std::sqrt(nn);
  return 2.0 * (nn * static_cast<double>(p) + static_cast<double>(t)) * log_n;
}

double default_delta(const Panel& panel, FamilyKind kind) {
  return default_delta(panel.n_assets(), panel.n_periods(), panel.n_covariates(), kind);
}

FactorEstimate extract_factors(const LowRankFit& fit, double delta) {
  const Index k = select_rank(fit, delta);
  FactorEstimate est = extract_factors_with_rank(fit, k);
  est.delta_used = delta;
  return est;
}

FactorEstimate extract_factors_with_rank(const LowRankFit& fit, Index k) {
  const Matrix z = extraction_matrix(fit.matrix, fit.family.kind);
  if (k < 0 || k > std::min(z.rows(), z.cols()))
    fail(ErrorKind::InvalidInput, "number of factors out of range");
  Index n = infer_assets(fit);
  if (n < 0) n = fit.n_assets;
  if (n < 1) fail(ErrorKind::InvalidInput, "fit does not record the number of assets");
  if (fit.family.kind == FamilyKind::Unconstrained && z.rows() % n != 0)
    fail(ErrorKind::InvalidInput, "fit rows are not a multiple of the number of assets");
  return extract_impl(fit, k, n);
}

Matrix rotation_align(const Matrix& f_true, const Matrix& f_est, bool demean) {
  if (f_est.cols() < 1 || f_true.cols() < 1) fail(ErrorKind::InvalidInput, "rotation needs at least one factor");
  if (f_true.rows() != f_est.rows()) fail(ErrorKind::InvalidInput, "factor matrices have different lengths");
  const Matrix fe = demean ? Matrix(f_est.rowwise() - f_est.colwise().mean()) : f_est;
  const Matrix gram = fe.transpose() * fe;
  Eigen::JacobiSVD<Matrix> cond(gram);
  const Vector s = cond.singularValues();
  if (!(s(s.size() - 1) > 0.0) || s(0) / s(s.size() - 1) > 1e12)
    fail(ErrorKind::DegenerateInput, "estimated factors are (nearly) collinear");
  // F' M F_est with M idempotent equals (M F)' (M F_est) = F' (M F_est).
  const Matrix cross = f_true.transpose() * fe;
  return gram.ldlt().solve(cross.transpose()).transpose();
}

Vector full_alpha(const FactorEstimate& est) {
  const Index n = est.n_assets;
  const Index p = est.n_covariates;
  if (est.alpha.size() == 0) return Vector::Zero(n * p);
  switch (est.family.kind) {
    case FamilyKind::Unconstrained:
      return est.alpha;
    case FamilyKind::Homogeneous:
      return kron_ones(n, est.alpha);
    case FamilyKind::Semiparametric: {
      Vector out(n * p);
      for (Index i = 0; i < n; ++i) {
        out(i * p) = est.alpha(i);
        out.segment(i * p + 1, p - 1) = est.alpha_star;
      }
      return out;
    }
  }
  return {};
}

Matrix full_beta(const FactorEstimate& est) {
  const Index n = est.n_assets;
  const Index p = est.n_covariates;
  switch (est.family.kind) {
    case FamilyKind::Unconstrained:
      return est.beta;
    case FamilyKind::Homogeneous:
      return kron_ones(n, est.beta);
    case FamilyKind::Semiparametric: {
      Matrix out(n * p, est.k_hat);
      for (Index i = 0; i < n; ++i) {
        out.row(i * p) = est.beta.row(i);
        out.middleRows(i * p + 1, p - 1) = est.beta_star;
      }
      return out;
    }
  }
  return {};
}

}  // namespace nucfactor
