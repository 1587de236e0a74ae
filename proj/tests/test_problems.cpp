#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "nucfactor/errors.hpp"
#include "nucfactor/problems.hpp"

using namespace nucfactor;
using testing::random_matrix;
using testing::random_panel;

namespace {

constexpr FamilyKind kAll[] = {FamilyKind::Unconstrained, FamilyKind::Semiparametric, FamilyKind::Homogeneous};

DecisionMatrix random_decision(const Panel& panel, FamilyKind kind, std::mt19937_64& rng) {
  DecisionMatrix g = zero_decision(panel, kind);
  g.main = random_matrix(g.main.rows(), g.main.cols(), rng);
  if (g.star.size() > 0) g.star = random_matrix(g.star.rows(), g.star.cols(), rng);
  return g;
}

// Triple loop straight from the model definitions, reading covariates
// through Panel::covariate.
double brute_loss(const Panel& panel, FamilyKind kind, const DecisionMatrix& g) {
  const Index n = panel.n_assets(), p = panel.n_covariates();
  std::vector<Matrix> x;
  for (Index k = 0; k < p; ++k) x.push_back(panel.covariate(k));
  double total = 0.0;
  for (Index t = 0; t < panel.n_periods(); ++t) {
    for (Index i = 0; i < n; ++i) {
      if (!panel.observed(i, t)) continue;
      double fit = 0.0;
      for (Index k = 0; k < p; ++k) {
        double gamma = 0.0;
        if (kind == FamilyKind::Unconstrained) gamma = g.main(i * p + k, t);
        if (kind == FamilyKind::Homogeneous) gamma = g.main(k, t);
        if (kind == FamilyKind::Semiparametric) gamma = k == 0 ? g.main(i, t) : g.star(k - 1, t);
        fit += x[k](i, t) * gamma;
      }
      total += 0.5 * (panel.y(i, t) - fit) * (panel.y(i, t) - fit);
    }
  }
  return total;
}

double inner(const DecisionMatrix& a, const DecisionMatrix& b) {
  double s = (a.main.array() * b.main.array()).sum();
  if (a.star.size() > 0) s += (a.star.array() * b.star.array()).sum();
  return s;
}

DecisionMatrix axpy(const DecisionMatrix& a, double h, const DecisionMatrix& d) {
  DecisionMatrix out{a.main + h * d.main, a.star};
  if (a.star.size() > 0) out.star = a.star + h * d.star;
  return out;
}

}  // namespace

TEST_CASE("loss at zero is half the sum of squared returns") {
  const Panel panel = random_panel(5, 4, 3, 11, 0.2);
  for (FamilyKind kind : kAll)
    CHECK(loss(panel, {kind}, zero_decision(panel, kind)) == doctest::Approx(0.5 * panel.y().squaredNorm()));
}

TEST_CASE("homogeneous scalar regression") {
  Matrix y(1, 3);
  y << 1.0, -2.0, 0.5;
  const Panel panel(y, {Matrix::Ones(1, 3)});
  DecisionMatrix g{Matrix(1, 3), Matrix()};
  g.main << 0.5, 0.0, 2.0;
  const double want = 0.5 * (0.25 + 4.0 + 2.25);
  CHECK(loss(panel, {FamilyKind::Homogeneous}, g) == doctest::Approx(want));
}

TEST_CASE("loss matches a brute-force loop for every family") {
  std::mt19937_64 rng(12);
  for (double missing : {0.0, 0.3}) {
    const Panel panel = random_panel(4, 3, 2, 12, missing);
    for (FamilyKind kind : kAll) {
      const DecisionMatrix g = random_decision(panel, kind, rng);
      CHECK(loss(panel, {kind}, g) == doctest::Approx(brute_loss(panel, kind, g)).epsilon(1e-12));
    }
  }
}

TEST_CASE("gradient vanishes at the unregularized least-squares fit") {
  const Panel panel = random_panel(6, 5, 3, 13, 0.1);
  for (FamilyKind kind : kAll) {
    const Problem prob(panel, {kind});
    const DecisionMatrix g = prob.gradient(prob.least_squares());
    CHECK(g.main.cwiseAbs().maxCoeff() < 1e-8);
    if (g.star.size() > 0) CHECK(g.star.cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("gradient matches central finite differences") {
  std::mt19937_64 rng(14);
  const Panel panel = random_panel(4, 3, 3, 14, 0.2);
  const double h = 1e-5;
  for (FamilyKind kind : kAll) {
    const Problem prob(panel, {kind});
    const DecisionMatrix g = random_decision(panel, kind, rng);
    const DecisionMatrix grad = prob.gradient(g);
    auto check_block = [&](bool star) {
      const Matrix& block = star ? g.star : g.main;
      for (Index r = 0; r < block.rows(); ++r) {
        for (Index c = 0; c < block.cols(); ++c) {
          DecisionMatrix up = g, dn = g;
          (star ? up.star : up.main)(r, c) += h;
          (star ? dn.star : dn.main)(r, c) -= h;
          const double fd = (prob.loss(up) - prob.loss(dn)) / (2 * h);
          const double an = (star ? grad.star : grad.main)(r, c);
          CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(an)));
        }
      }
    };
    check_block(false);
    if (g.star.size() > 0) check_block(true);

    const DecisionMatrix d = random_decision(panel, kind, rng);
    const double dir = (prob.loss(axpy(g, h, d)) - prob.loss(axpy(g, -h, d))) / (2 * h);
    CHECK(dir == doctest::Approx(inner(grad, d)).epsilon(1e-6));
  }
}

TEST_CASE("single observed cell, homogeneous gradient") {
  std::mt19937_64 rng(15);
  const Index n = 3, t = 4, p = 2;
  Mask mask = Mask::Constant(n, t, false);
  mask(1, 2) = true;
  std::vector<Matrix> x = {random_matrix(n, t, rng), random_matrix(n, t, rng)};
  const Panel panel(random_matrix(n, t, rng), mask, x);
  const Matrix g = random_matrix(p, t, rng);
  const DecisionMatrix grad = gradient(panel, {FamilyKind::Homogeneous}, {g, Matrix()});
  Vector xit(2);
  xit << x[0](1, 2), x[1](1, 2);
  const Vector want = xit * (xit.dot(g.col(2)) - panel.y(1, 2));
  CHECK((grad.main.col(2) - want).norm() < 1e-12);
  CHECK(grad.main.col(0).norm() == 0.0);
  CHECK(grad.main.col(1).norm() == 0.0);
  CHECK(grad.main.col(3).norm() == 0.0);
}

TEST_CASE("Lipschitz constants of simple designs") {
  std::mt19937_64 rng(16);
  const Panel ones(random_matrix(3, 4, rng), {Matrix::Ones(3, 4)});
  CHECK(lipschitz_constant(ones, {FamilyKind::Unconstrained}) == doctest::Approx(1.0));
  const Panel two(random_matrix(2, 5, rng), {Matrix::Ones(2, 5)});
  CHECK(lipschitz_constant(two, {FamilyKind::Homogeneous}) == doctest::Approx(2.0));
}

TEST_CASE("sampled Lipschitz bound holds in stacked coordinates") {
  std::mt19937_64 rng(17);
  const Panel panel = random_panel(6, 5, 3, 17, 0.15);
  for (FamilyKind kind : kAll) {
    const Problem prob(panel, {kind});
    const double lf = prob.lipschitz();
    for (int k = 0; k < 100; ++k) {
      const Matrix z1 = random_matrix(prob.stacked_rows(), prob.stacked_cols(), rng);
      const Matrix z2 = random_matrix(prob.stacked_rows(), prob.stacked_cols(), rng, 0.1 + 0.05 * k);
      CHECK((prob.stacked_gradient(z1) - prob.stacked_gradient(z2)).norm() <= lf * (z1 - z2).norm() * (1 + 1e-12));
    }
  }
}

TEST_CASE("all-masked panel is degenerate") {
  std::vector<Matrix> x = {Matrix::Ones(2, 2)};
  const Panel panel(Matrix::Ones(2, 2), Mask::Constant(2, 2, false), x);
  try {
    lipschitz_constant(panel, {FamilyKind::Unconstrained});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateInput);
  }
}

TEST_CASE("dimension mismatch is invalid input") {
  const Panel panel = random_panel(3, 3, 2, 18);
  DecisionMatrix g{Matrix::Zero(5, 3), Matrix()};
  try {
    loss(panel, {FamilyKind::Unconstrained}, g);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidInput);
  }
}

TEST_CASE("semiparametric family needs a unit first covariate") {
  const Panel panel = random_panel(3, 3, 2, 19, 0.0, false);
  CHECK_THROWS_AS(Problem(panel, {FamilyKind::Semiparametric}), Error);
  const Panel single = random_panel(3, 3, 1, 19);
  CHECK_THROWS_AS(Problem(single, {FamilyKind::Semiparametric}), Error);
}

TEST_CASE("masking a cell equals zeroing its data") {
  std::mt19937_64 rng(20);
  const Index n = 4, t = 3, p = 2;
  const Matrix y = random_matrix(n, t, rng);
  std::vector<Matrix> x = {random_matrix(n, t, rng), random_matrix(n, t, rng)};
  Mask mask = Mask::Constant(n, t, true);
  mask(2, 1) = false;
  const Panel masked(y, mask, x);
  Matrix y0 = y;
  y0(2, 1) = 0.0;
  std::vector<Matrix> x0 = x;
  for (auto& m : x0) m(2, 1) = 0.0;
  const Panel zeroed(y0, x0);
  for (FamilyKind kind : {FamilyKind::Unconstrained, FamilyKind::Homogeneous}) {
    const DecisionMatrix g = random_decision(masked, kind, rng);
    CHECK(loss(masked, {kind}, g) == doctest::Approx(loss(zeroed, {kind}, g)).epsilon(1e-14));
    CHECK((gradient(masked, {kind}, g).main - gradient(zeroed, {kind}, g).main).norm() < 1e-13);
  }
}

TEST_CASE("homogeneous objective equals the full objective at the Kronecker copy") {
  std::mt19937_64 rng(21);
  const Panel panel = random_panel(5, 4, 3, 21, 0.1);
  const Index n = panel.n_assets();
  const Matrix g0 = random_matrix(3, 4, rng);
  const double lambda = 0.7;
  const double reduced = loss(panel, {FamilyKind::Homogeneous}, {g0, Matrix()}) +
                         std::sqrt(double(n)) * lambda * nuclear_norm(g0);
  const Matrix full = expand_to_full({g0, Matrix()}, FamilyKind::Homogeneous, n);
  CHECK((full - kron_ones(n, g0)).norm() == 0.0);
  const double direct = loss(panel, {FamilyKind::Unconstrained}, {full, Matrix()}) + lambda * nuclear_norm(full);
  CHECK(reduced == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("semiparametric objective equals the full objective at the interleaved matrix") {
  std::mt19937_64 rng(22);
  const Panel panel = random_panel(5, 4, 3, 22, 0.1);
  const Index n = panel.n_assets();
  const Problem prob(panel, {FamilyKind::Semiparametric});
  const DecisionMatrix g = random_decision(panel, FamilyKind::Semiparametric, rng);
  const double lambda = 1.3;
  const double stacked = prob.loss(g) + lambda * nuclear_norm(prob.to_stacked(g));
  const Matrix full = expand_to_full(g, FamilyKind::Semiparametric, n);
  for (Index i = 0; i < n; ++i) {
    CHECK((full.row(i * 3) - g.main.row(i)).norm() == 0.0);
    CHECK((full.middleRows(i * 3 + 1, 2) - g.star).norm() == 0.0);
  }
  const double direct = loss(panel, {FamilyKind::Unconstrained}, {full, Matrix()}) + lambda * nuclear_norm(full);
  CHECK(stacked == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("parallel kernels agree with the serial reference") {
  std::mt19937_64 rng(23);
  // Large enough to cross the parallel threshold.
  const Panel panel = random_panel(120, 60, 4, 23, 0.05);
  for (FamilyKind kind : kAll) {
    const Problem prob(panel, {kind});
    const Matrix z = random_matrix(prob.stacked_rows(), prob.stacked_cols(), rng);
    CHECK(prob.stacked_loss(z) == prob.stacked_loss_serial(z));
    CHECK((prob.stacked_gradient(z) - prob.stacked_gradient_serial(z)).norm() == 0.0);
  }
}
