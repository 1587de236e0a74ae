#include "nucfactor/evaluate.hpp"

#include <cmath>
#include <limits>

#include "nucfactor/errors.hpp"
#include "nucfactor/seeding.hpp"

namespace nucfactor {

namespace {

void check_estimate(const Panel& panel, const FactorEstimate& est) {
  if (est.n_assets != panel.n_assets() || est.n_covariates != panel.n_covariates())
    fail(ErrorKind::InvalidInput, "estimate dimensions do not match the panel");
}

}  // namespace

FitScores r2_scores(const Panel& panel, const Matrix& pred, const Mask& cells) {
  const Index n = panel.n_assets();
  const Index t_count = panel.n_periods();
  Vector res_i = Vector::Zero(n), tot_i = Vector::Zero(n);
  Vector res_t = Vector::Zero(t_count), tot_t = Vector::Zero(t_count);
  Index any = 0;
  for (Index t = 0; t < t_count; ++t)
    for (Index i = 0; i < n; ++i) {
      if (!cells(i, t) || !panel.observed(i, t)) continue;
      const double y = panel.y(i, t);
      const double u = y - pred(i, t);
      res_i(i) += u * u;
      tot_i(i) += y * y;
      res_t(t) += u * u;
      tot_t(t) += y * y;
      ++any;
    }
  FitScores s;
  if (any == 0) fail(ErrorKind::DegenerateInput, "no cells to score");
  const double total = tot_i.sum();
  if (!(total > 0.0)) fail(ErrorKind::DegenerateInput, "all scored returns are zero");
  s.r2_total = 1.0 - res_i.sum() / total;

  double acc = 0.0;
  Index used = 0;
  for (Index i = 0; i < n; ++i) {
    if (tot_i(i) > 0.0) {
      acc += res_i(i) / tot_i(i);
      ++used;
    } else {
      ++s.excluded_assets;
    }
  }
  s.r2_ts_avg = 1.0 - acc / static_cast<double>(used);

  acc = 0.0;
  used = 0;
  for (Index t = 0; t < t_count; ++t) {
    bool scored = false;
    for (Index i = 0; i < n && !scored; ++i) scored = cells(i, t) && panel.observed(i, t);
    if (!scored) continue;
    if (tot_t(t) > 0.0) {
      acc += res_t(t) / tot_t(t);
      ++used;
    } else {
      ++s.excluded_periods;
    }
  }
  s.r2_cs_avg = 1.0 - acc / static_cast<double>(used);
  return s;
}

Matrix fitted_returns(const Panel& panel, const FactorEstimate& est) {
  check_estimate(panel, est);
  if (est.factors.rows() != panel.n_periods()) fail(ErrorKind::InvalidInput, "estimate covers a different period count");
  const Index n = panel.n_assets();
  const Index p = panel.n_covariates();
  const Vector a = full_alpha(est);
  const Matrix b = full_beta(est);
  const Matrix coef = a * Vector::Ones(panel.n_periods()).transpose() + b * est.factors.transpose();
  Matrix out = Matrix::Zero(n, panel.n_periods());
  for (Index t = 0; t < panel.n_periods(); ++t)
    for (Index i = 0; i < n; ++i)
      if (panel.observed(i, t)) out(i, t) = panel.x(i, t).dot(coef.col(t).segment(i * p, p));
  return out;
}

Vector predict_period(const Panel& panel, Index t, const FactorEstimate& est) {
  check_estimate(panel, est);
  const Index n = panel.n_assets();
  const Index p = panel.n_covariates();
  Vector coef = full_alpha(est);
  if (est.k_hat > 0) coef += full_beta(est) * est.factors.colwise().mean().transpose();
  Vector out = Vector::Zero(n);
  for (Index i = 0; i < n; ++i)
    if (panel.observed(i, t)) out(i) = panel.x(i, t).dot(coef.segment(i * p, p));
  return out;
}

FitScores in_sample_r2(const Panel& panel, const FactorEstimate& est) {
  return r2_scores(panel, fitted_returns(panel, est), panel.mask());
}

OosReport out_of_sample_r2(const Panel& panel, const OosPlan& plan) {
  const Index n = panel.n_assets();
  const Index t_count = panel.n_periods();
  if (plan.burn_in < 2) fail(ErrorKind::InvalidInput, "burn_in must be >= 2");
  if (plan.burn_in > t_count) fail(ErrorKind::InvalidInput, "burn_in exceeds the number of periods");
  for (Index k : plan.ranks)
    if (k < 1) fail(ErrorKind::InvalidInput, "prescribed factor counts must be >= 1");
  const FamilyKind kind = plan.family.kind;

  OosReport report;
  report.ranks = plan.ranks.empty() ? std::vector<Index>{-1} : plan.ranks;
  const std::size_t n_rank = report.ranks.size();
  report.predictions.assign(n_rank, Matrix::Constant(n, t_count, std::numeric_limits<double>::quiet_NaN()));

  auto tune = [&](const Panel& train, std::uint64_t index) {
    CvPlan cv = plan.cv;
    cv.seed = derive_seed(plan.cv.seed, "oos-cv", index);
    return cross_validate(train, plan.family, cv, plan.solver).chosen_c;
  };
  double c = 0.0;
  if (plan.fixed_c) {
    c = *plan.fixed_c;
  } else if (!plan.cv_each_period) {
    c = tune(panel.leading_periods(plan.burn_in - 1), 0);
  }
  report.c_used = c;

  Mask scored = Mask::Constant(n, t_count, false);
  std::optional<DecisionMatrix> previous;
  // t0 is the 0-based index of the predicted period; training uses [0, t0).
  for (Index t0 = plan.burn_in - 1; t0 < t_count; ++t0) {
    const Index period = t0 + 1;
    bool any = false;
    for (Index i = 0; i < n && !any; ++i) any = panel.observed(i, t0);
    if (!any) {
      report.skipped.push_back({period, "no observed cells"});
      continue;
    }
    try {
      const Panel train = panel.leading_periods(t0);
      const double c_t = (plan.cv_each_period && !plan.fixed_c) ? tune(train, static_cast<std::uint64_t>(period)) : c;
      SolverConfig config = plan.solver;
      config.lambda = default_lambda(train, kind, c_t);
      if (plan.warm_start && previous && config.lambda > 0.0) {
        DecisionMatrix init = *previous;
        const Index cols = train.n_periods();
        const Index old = init.main.cols();
        init.main.conservativeResize(Eigen::NoChange, cols);
        init.main.rightCols(cols - old).setZero();
        if (init.star.size() > 0) {
          init.star.conservativeResize(Eigen::NoChange, cols);
          init.star.rightCols(cols - old).setZero();
        }
        config.initial = std::move(init);
      }
      const LowRankFit fit = fit_low_rank(train, plan.family, config);
      previous = fit.matrix;
      const Index max_rank = std::min(extraction_matrix(fit.matrix, kind).rows(), train.n_periods());

      std::vector<Vector> preds;
      for (Index k : report.ranks) {
        FactorEstimate est;
        if (k < 0) {
          est = extract_factors(fit, plan.delta ? *plan.delta : default_delta(train, kind));
        } else {
          est = extract_factors_with_rank(fit, std::min(k, max_rank));
        }
        preds.push_back(predict_period(panel, t0, est));
      }
      for (std::size_t r = 0; r < n_rank; ++r)
        for (Index i = 0; i < n; ++i)
          if (panel.observed(i, t0)) report.predictions[r](i, t0) = preds[r](i);
      for (Index i = 0; i < n; ++i) scored(i, t0) = panel.observed(i, t0);
      report.evaluated_periods.push_back(period);
    } catch (const Error& e) {
      report.skipped.push_back({period, e.what()});
      previous.reset();
    }
  }
  if (report.evaluated_periods.empty()) fail(ErrorKind::DegenerateInput, "no out-of-sample period could be evaluated");
  for (std::size_t r = 0; r < n_rank; ++r) {
    const Matrix pred = report.predictions[r].unaryExpr([](double v) { return std::isnan(v) ? 0.0 : v; });
    report.scores.push_back(r2_scores(panel, pred, scored));
  }
  return report;
}

}  // namespace nucfactor
