#include <doctest.h>

#include "helpers.hpp"
#include "nucfactor/errors.hpp"
#include "nucfactor/simulate.hpp"

using namespace nucfactor;

TEST_CASE("DGP3 loadings are homogeneous with the stated values") {
  const SimTruth truth = generate({3, 6, 5, 81});
  Vector a(4);
  a << 1, 1, 0, 0;
  Matrix b = Matrix::Zero(4, 2);
  b(2, 0) = 2;
  b(3, 1) = 2;
  for (Index i = 0; i < 6; ++i) {
    CHECK(truth.a_full.segment(i * 4, 4) == a);
    CHECK(truth.b_full.middleRows(i * 4, 4) == b);
  }
  const TrueParams tp = family_truth(truth, FamilyKind::Homogeneous);
  CHECK(tp.alpha == a);
  CHECK(tp.beta == b);
  CHECK(truth.panel.covariate(3) == Matrix::Ones(6, 5));
}

TEST_CASE("generation is seeded and deterministic") {
  const SimTruth a = generate({1, 8, 7, 82});
  const SimTruth b = generate({1, 8, 7, 82});
  const SimTruth c = generate({1, 8, 7, 83});
  CHECK(a.panel.y() == b.panel.y());
  CHECK(a.panel.covariate_block() == b.panel.covariate_block());
  CHECK(a.factors == b.factors);
  CHECK(a.a_full == b.a_full);
  CHECK(a.panel.y() != c.panel.y());
}

TEST_CASE("noiseless returns are reproduced exactly from the stored pieces") {
  DgpSpec spec{1, 5, 4, 84};
  spec.noise_variance = 0.0;
  const SimTruth truth = generate(spec);
  for (Index t = 0; t < 4; ++t)
    for (Index i = 0; i < 5; ++i) {
      double v = 0.0;
      for (Index r = 0; r < 4; ++r) v += truth.panel.covariate(r)(i, t) * truth.pi_full(i * 4 + r, t);
      CHECK(truth.panel.y(i, t) == v);
    }
  CHECK((truth.pi_full - (truth.a_full * Matrix::Ones(1, 4) + truth.b_full * truth.factors.transpose())).norm() == 0.0);
}

TEST_CASE("factor innovations have mean one") {
  const Index t = 10001;
  const SimTruth truth = generate({3, 2, t, 85});
  const Matrix& f = truth.factors;
  Eigen::RowVector2d mean = Eigen::RowVector2d::Zero();
  for (Index s = 1; s < t; ++s) mean += f.row(s) - 0.3 * f.row(s - 1);
  mean /= double(t - 1);
  CHECK(std::abs(mean(0) - 1.0) < 3.0 * std::sqrt(1.0 / 10000));
  CHECK(std::abs(mean(1) - 1.0) < 3.0 * std::sqrt(1.0 / 10000));
}

TEST_CASE("DGP2 compact truth matches the expanded loadings") {
  DgpSpec spec{2, 7, 5, 86};
  spec.intercept_first = true;
  const SimTruth truth = generate(spec);
  const TrueParams tp = family_truth(truth, FamilyKind::Semiparametric);
  Vector phi(3);
  phi << 1, 1, 0;
  Matrix big_phi = Matrix::Zero(3, 2);
  big_phi(2, 0) = 2;
  CHECK(tp.alpha_star == phi);
  CHECK(tp.beta_star == big_phi);
  CHECK(tp.alpha == Vector::Zero(7));
  CHECK(tp.beta.col(0) == Vector::Zero(7));
  for (Index i = 0; i < 7; ++i) {
    CHECK(tp.beta(i, 1) >= 1.0);
    CHECK(tp.beta(i, 1) <= 3.0);
    CHECK(truth.a_full(i * 4) == tp.alpha(i));
    CHECK(truth.a_full.segment(i * 4 + 1, 3) == phi);
    CHECK(truth.b_full.row(i * 4) == tp.beta.row(i));
    CHECK(truth.b_full.middleRows(i * 4 + 1, 3) == big_phi);
  }
  CHECK(expand_to_full(tp.pi, FamilyKind::Semiparametric, 7) == truth.pi_full);
}

TEST_CASE("families the design does not support are configuration errors") {
  const SimTruth truth = generate({1, 4, 4, 87});
  try {
    family_truth(truth, FamilyKind::Homogeneous);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
  }
  CHECK_THROWS_AS(family_truth(generate({2, 4, 4, 87}), FamilyKind::Semiparametric), Error);
  CHECK_THROWS_AS(generate({4, 4, 4, 87}), Error);
}

TEST_CASE("single replication at c = 0 matches a direct least-squares audit") {
  const DgpSpec spec{3, 10, 8, 88};
  StudyPlan plan;
  plan.family = {FamilyKind::Homogeneous};
  plan.fixed_c = 0.0;
  plan.reps = 1;
  const SimReport report = run_study(spec, plan);
  REQUIRE(report.failures == 0);

  DgpSpec rep = spec;
  rep.seed = replication_seed(spec.seed, 0);
  const SimTruth truth = generate(rep);
  Matrix ls(4, 8);
  for (Index t = 0; t < 8; ++t) {
    Matrix x(10, 4);
    for (Index r = 0; r < 4; ++r) x.col(r) = truth.panel.covariate(r).col(t);
    ls.col(t) = x.householderQr().solve(truth.panel.y().col(t));
  }
  const double want = (ls - truth.pi_full.topRows(4)).squaredNorm() / 8.0;
  CHECK(report.reps[0].curve_mse == doctest::Approx(want).epsilon(1e-10));
  CHECK(report.aggregate.all_reps[0] == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("noiseless designs are recovered as c goes to zero") {
  DgpSpec spec{3, 12, 10, 89};
  spec.noise_variance = 0.0;
  StudyPlan plan;
  plan.family = {FamilyKind::Homogeneous};
  plan.fixed_c = 0.01;
  plan.sweep = {0.0, 0.001, 0.01, 0.1};
  plan.solver.tolerance = 1e-10;
  const SimReport report = run_study(spec, plan);
  const auto& s = report.sweep_mse_mean;
  CHECK(s[0] < 1e-20);
  CHECK(s[1] < s[2]);
  CHECK(s[2] < s[3]);
  CHECK(s[1] < 1e-3);
}

TEST_CASE("aggregates are recomputable from the replications") {
  StudyPlan plan;
  plan.family = {FamilyKind::Homogeneous};
  plan.fixed_c = 0.3;
  plan.reps = 6;
  const SimReport report = run_study({3, 20, 15, 90}, plan);
  const auto& agg = report.aggregate;
  int correct = 0;
  for (const RepMetrics& m : report.reps) correct += m.k_hat == kSimFactors;
  CHECK(report.k_correct_rate == double(correct) / 6.0);
  CHECK(report.k_correct_rate >= 0.0);
  CHECK(report.k_correct_rate <= 1.0);
  for (std::size_t j = 0; j < agg.names.size(); ++j) {
    double sum = 0.0, sum_ok = 0.0;
    int cnt = 0, cnt_ok = 0;
    for (const RepMetrics& m : report.reps) {
      const double v = m.values[j].second;
      if (!std::isfinite(v)) continue;
      sum += v;
      ++cnt;
      if (m.k_hat == kSimFactors) {
        sum_ok += v;
        ++cnt_ok;
      }
    }
    CHECK(agg.all_reps[j] == sum / cnt);
    if (cnt_ok > 0) CHECK(agg.correct_k[j] == sum_ok / cnt_ok);
  }
}

TEST_CASE("parallel study equals serial replications") {
  StudyPlan plan;
  plan.family = {FamilyKind::Unconstrained};
  plan.fixed_c = 0.8;
  plan.reps = 4;
  const DgpSpec spec{1, 15, 12, 91};
  const SimReport report = run_study(spec, plan);
  for (int r = 0; r < plan.reps; ++r) {
    DgpSpec local = spec;
    local.seed = replication_seed(spec.seed, r);
    const RepMetrics m = run_replication(local, plan);
    CHECK(m.curve_mse == report.reps[static_cast<std::size_t>(r)].curve_mse);
    CHECK(m.k_hat == report.reps[static_cast<std::size_t>(r)].k_hat);
  }
}

TEST_CASE("metric names per family") {
  CHECK(metric_names(FamilyKind::Unconstrained) == std::vector<std::string>{"pi", "a", "B", "F"});
  CHECK(metric_names(FamilyKind::Homogeneous).size() == 4);
  CHECK(metric_names(FamilyKind::Semiparametric).size() == 7);
}
