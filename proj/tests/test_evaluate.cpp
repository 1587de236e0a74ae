#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "nucfactor/errors.hpp"
#include "nucfactor/evaluate.hpp"

using namespace nucfactor;
using testing::random_matrix;
using testing::random_panel;

namespace {

FactorEstimate manual_estimate(Index n, Index p, Index t, Index k, std::mt19937_64& rng) {
  FactorEstimate est;
  est.family = {FamilyKind::Unconstrained, false};
  est.n_assets = n;
  est.n_covariates = p;
  est.n_periods = t;
  est.k_hat = k;
  est.alpha = random_matrix(n * p, 1, rng);
  est.beta = random_matrix(n * p, k, rng);
  est.factors = random_matrix(t, k, rng);
  return est;
}

// Direct loops over Eq.-style sums: total, per-asset time series, per-period cross section.
FitScores brute_scores(const Matrix& y, const Matrix& pred) {
  double res = 0, tot = 0, ts = 0, cs = 0;
  for (Index i = 0; i < y.rows(); ++i) {
    double r = 0, q = 0;
    for (Index t = 0; t < y.cols(); ++t) {
      r += std::pow(y(i, t) - pred(i, t), 2);
      q += y(i, t) * y(i, t);
    }
    res += r;
    tot += q;
    ts += r / q;
  }
  for (Index t = 0; t < y.cols(); ++t) {
    double r = 0, q = 0;
    for (Index i = 0; i < y.rows(); ++i) {
      r += std::pow(y(i, t) - pred(i, t), 2);
      q += y(i, t) * y(i, t);
    }
    cs += r / q;
  }
  FitScores s;
  s.r2_total = 1 - res / tot;
  s.r2_ts_avg = 1 - ts / double(y.rows());
  s.r2_cs_avg = 1 - cs / double(y.cols());
  return s;
}

}  // namespace

TEST_CASE("perfect fit scores one") {
  std::mt19937_64 rng(101);
  const Panel base = random_panel(5, 6, 3, 101);
  const FactorEstimate est = manual_estimate(5, 3, 6, 2, rng);
  std::vector<Matrix> x;
  for (Index k = 0; k < 3; ++k) x.push_back(base.covariate(k));
  const Panel panel(fitted_returns(base, est), x);
  const FitScores s = in_sample_r2(panel, est);
  CHECK(s.r2_total == doctest::Approx(1.0));
  CHECK(s.r2_ts_avg == doctest::Approx(1.0));
  CHECK(s.r2_cs_avg == doctest::Approx(1.0));
}

TEST_CASE("zero estimate scores zero") {
  const Panel panel = random_panel(5, 6, 2, 102, 0.2);
  FactorEstimate est;
  est.family = {FamilyKind::Homogeneous, false};
  est.n_assets = 5;
  est.n_covariates = 2;
  est.n_periods = 6;
  est.alpha = Vector::Zero(2);
  est.beta.resize(2, 0);
  est.factors.resize(6, 0);
  const FitScores s = in_sample_r2(panel, est);
  CHECK(s.r2_total == 0.0);
  CHECK(s.r2_ts_avg == 0.0);
  CHECK(s.r2_cs_avg == 0.0);
}

TEST_CASE("scores match a brute-force computation") {
  std::mt19937_64 rng(103);
  const Panel panel = random_panel(3, 4, 2, 103);
  const Matrix pred = random_matrix(3, 4, rng);
  const FitScores got = r2_scores(panel, pred, panel.mask());
  const FitScores want = brute_scores(panel.y(), pred);
  CHECK(got.r2_total == doctest::Approx(want.r2_total).epsilon(1e-12));
  CHECK(got.r2_ts_avg == doctest::Approx(want.r2_ts_avg).epsilon(1e-12));
  CHECK(got.r2_cs_avg == doctest::Approx(want.r2_cs_avg).epsilon(1e-12));
}

TEST_CASE("zero-denominator assets and periods are excluded and counted") {
  std::mt19937_64 rng(104);
  Matrix y = random_matrix(3, 4, rng);
  y.row(1).setZero();
  y.col(2).setZero();
  const Panel panel(y, {Matrix::Ones(3, 4)});
  const FitScores s = r2_scores(panel, random_matrix(3, 4, rng), panel.mask());
  CHECK(s.excluded_assets == 1);
  CHECK(s.excluded_periods == 1);
  CHECK(std::isfinite(s.r2_ts_avg));
  CHECK(std::isfinite(s.r2_cs_avg));
  const Panel zeros(Matrix::Zero(2, 2), {Matrix::Ones(2, 2)});
  CHECK_THROWS_AS(r2_scores(zeros, Matrix::Zero(2, 2), zeros.mask()), Error);
}

TEST_CASE("scores are invariant to joint sign flips of loadings and factors") {
  std::mt19937_64 rng(105);
  const Panel panel = random_panel(5, 6, 3, 105);
  FactorEstimate est = manual_estimate(5, 3, 6, 2, rng);
  const FitScores a = in_sample_r2(panel, est);
  est.beta.col(1) *= -1;
  est.factors.col(1) *= -1;
  const FitScores b = in_sample_r2(panel, est);
  CHECK(a.r2_total == doctest::Approx(b.r2_total).epsilon(1e-14));
  CHECK(a.r2_ts_avg == doctest::Approx(b.r2_ts_avg).epsilon(1e-14));
  CHECK(a.r2_cs_avg == doctest::Approx(b.r2_cs_avg).epsilon(1e-14));
}

TEST_CASE("period prediction does not depend on the number of factors") {
  const Panel panel = random_panel(10, 12, 3, 106);
  SolverConfig cfg;
  cfg.lambda = default_lambda(panel, FamilyKind::Unconstrained, 0.3);
  const LowRankFit fit = fit_low_rank(panel, {FamilyKind::Unconstrained}, cfg);
  const Vector mean = fit.matrix.main.rowwise().mean();
  Vector want(10);
  for (Index i = 0; i < 10; ++i) want(i) = panel.x(i, 4).dot(mean.segment(i * 3, 3));
  for (Index k = 0; k <= 5; ++k) {
    const Vector got = predict_period(panel, 4, extract_factors_with_rank(fit, k));
    CHECK((got - want).norm() < 1e-8);
  }
}

TEST_CASE("unregularized unit-covariate prediction is the historical mean") {
  std::mt19937_64 rng(107);
  const Matrix y = random_matrix(3, 5, rng) + Matrix::Constant(3, 5, 2.0);
  const Panel panel(y, {Matrix::Ones(3, 5)});
  OosPlan plan;
  plan.family = {FamilyKind::Unconstrained};
  plan.fixed_c = 0.0;
  plan.burn_in = 3;
  const OosReport rep = out_of_sample_r2(panel, plan);
  REQUIRE(rep.evaluated_periods == std::vector<Index>{3, 4, 5});
  Matrix pred = Matrix::Zero(3, 5);
  for (Index t = 2; t < 5; ++t)
    for (Index i = 0; i < 3; ++i) pred(i, t) = y.row(i).head(t).mean();
  for (Index t = 2; t < 5; ++t) CHECK((rep.predictions[0].col(t) - pred.col(t)).norm() < 1e-10);
  CHECK(std::isnan(rep.predictions[0](0, 0)));

  double res = 0, tot = 0;
  for (Index t = 2; t < 5; ++t)
    for (Index i = 0; i < 3; ++i) {
      res += std::pow(y(i, t) - pred(i, t), 2);
      tot += y(i, t) * y(i, t);
    }
  CHECK(rep.scores[0].r2_total == doctest::Approx(1 - res / tot).epsilon(1e-12));
}

TEST_CASE("constant returns with an intercept-only design are predicted exactly") {
  const Panel panel(Matrix::Constant(4, 6, 0.7), {Matrix::Ones(4, 6)});
  OosPlan plan;
  plan.family = {FamilyKind::Homogeneous};
  plan.fixed_c = 0.0;
  plan.burn_in = 2;
  const OosReport rep = out_of_sample_r2(panel, plan);
  CHECK(rep.scores[0].r2_total == doctest::Approx(1.0));
  CHECK(rep.scores[0].r2_cs_avg == doctest::Approx(1.0));
}

TEST_CASE("three-period panel, single out-of-sample period by hand") {
  std::mt19937_64 rng(108);
  const Panel panel = random_panel(6, 3, 2, 108);
  OosPlan plan;
  plan.family = {FamilyKind::Homogeneous};
  plan.fixed_c = 0.2;
  plan.burn_in = 3;
  plan.solver.tolerance = 1e-10;
  const OosReport rep = out_of_sample_r2(panel, plan);
  REQUIRE(rep.evaluated_periods == std::vector<Index>{3});

  const Panel train = panel.leading_periods(2);
  SolverConfig cfg = plan.solver;
  cfg.lambda = default_lambda(train, FamilyKind::Homogeneous, 0.2);
  const Matrix pi0 = solve(train, {FamilyKind::Homogeneous}, cfg).solution.main;
  const Vector gamma = pi0.rowwise().mean();
  double res = 0, tot = 0;
  for (Index i = 0; i < 6; ++i) {
    const double yhat = panel.x(i, 2).dot(gamma);
    CHECK(rep.predictions[0](i, 2) == doctest::Approx(yhat).epsilon(1e-8));
    res += std::pow(panel.y(i, 2) - yhat, 2);
    tot += panel.y(i, 2) * panel.y(i, 2);
  }
  CHECK(rep.scores[0].r2_total == doctest::Approx(1 - res / tot).epsilon(1e-8));
  CHECK(rep.scores[0].r2_cs_avg == doctest::Approx(1 - res / tot).epsilon(1e-8));
}

TEST_CASE("in-sample total R2 falls along the regularization path") {
  const Panel panel = random_panel(30, 20, 3, 109);
  double prev = 2.0;
  for (double c : simulation_grid()) {
    SolverConfig cfg;
    cfg.lambda = default_lambda(panel, FamilyKind::Homogeneous, c);
    cfg.tolerance = 1e-9;
    const LowRankFit fit = fit_low_rank(panel, {FamilyKind::Homogeneous}, cfg);
    const double r2 = in_sample_r2(panel, extract_factors_with_rank(fit, 3)).r2_total;
    CHECK(r2 <= prev + 1e-6);
    prev = r2;
  }
}

TEST_CASE("prescribed ranks share predictions and empty periods are skipped") {
  const Panel full = random_panel(8, 7, 2, 110);
  Mask drop = Mask::Constant(8, 7, false);
  drop.col(4).setConstant(true);
  const Panel panel = full.without_cells(drop);
  OosPlan plan;
  plan.family = {FamilyKind::Unconstrained};
  plan.fixed_c = 0.5;
  plan.burn_in = 4;
  plan.ranks = {1, 2, 3};
  const OosReport rep = out_of_sample_r2(panel, plan);
  REQUIRE(rep.skipped.size() == 1);
  CHECK(rep.skipped[0].period == 5);
  CHECK(rep.evaluated_periods == std::vector<Index>{4, 6, 7});
  for (std::size_t r = 1; r < 3; ++r) {
    const Matrix a = rep.predictions[0].unaryExpr([](double v) { return std::isnan(v) ? 0.0 : v; });
    const Matrix b = rep.predictions[r].unaryExpr([](double v) { return std::isnan(v) ? 0.0 : v; });
    CHECK((a - b).norm() < 1e-8);
  }
}

TEST_CASE("bad burn-in is rejected") {
  const Panel panel = random_panel(4, 4, 1, 111);
  OosPlan plan;
  plan.fixed_c = 0.1;
  plan.burn_in = 1;
  CHECK_THROWS_AS(out_of_sample_r2(panel, plan), Error);
  plan.burn_in = 5;
  CHECK_THROWS_AS(out_of_sample_r2(panel, plan), Error);
}
