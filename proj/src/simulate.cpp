#include "nucfactor/simulate.hpp"

#include <array>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <random>

#include "nucfactor/errors.hpp"
#include "nucfactor/seeding.hpp"

namespace nucfactor {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Row of each paper-order covariate (sigma u1, AR(1), u3, 1) in the panel.
std::array<Index, 4> covariate_rows(bool intercept_first) {
  if (intercept_first) return {1, 2, 3, 0};
  return {0, 1, 2, 3};
}

bool same_rows(const Matrix& m, Index p, Index offset) {
  const Index n = m.rows() / p;
  for (Index i = 1; i < n; ++i)
    if (m.row(i * p + offset) != m.row(offset)) return false;
  return true;
}

double sq(const Matrix& a) { return a.squaredNorm(); }

Matrix pseudo_inverse(const Matrix& a) { return a.completeOrthogonalDecomposition().pseudoInverse(); }

}  // namespace

FamilyKind default_family(int which) {
  switch (which) {
    case 1: return FamilyKind::Unconstrained;
    case 2: return FamilyKind::Semiparametric;
    case 3: return FamilyKind::Homogeneous;
    default: fail(ErrorKind::ConfigError, "DGP must be 1, 2 or 3");
  }
}

SimTruth generate(const DgpSpec& spec) {
  if (spec.which < 1 || spec.which > 3) fail(ErrorKind::ConfigError, "DGP must be 1, 2 or 3");
  if (spec.n < 2 || spec.t < 2) fail(ErrorKind::InvalidInput, "simulation needs N, T >= 2");
  if (!(spec.noise_variance >= 0.0)) fail(ErrorKind::InvalidInput, "noise variance must be nonnegative");
  const Index n = spec.n;
  const Index t_count = spec.t;
  const Index p = kSimCovariates;
  const Index k = kSimFactors;
  const auto rows = covariate_rows(spec.intercept_first);

  std::mt19937_64 rng_x(derive_seed(spec.seed, "covariates"));
  std::mt19937_64 rng_f(derive_seed(spec.seed, "factors"));
  std::mt19937_64 rng_load(derive_seed(spec.seed, "loadings"));
  std::mt19937_64 rng_eps(derive_seed(spec.seed, "noise"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif12(1.0, 2.0);
  std::uniform_real_distribution<double> unif13(1.0, 3.0);

  std::vector<Matrix> x(static_cast<std::size_t>(p), Matrix(n, t_count));
  Vector sigma(t_count);
  for (Index t = 0; t < t_count; ++t) sigma(t) = unif12(rng_x);
  Vector lagged(n);
  for (Index i = 0; i < n; ++i) lagged(i) = normal(rng_x);
  for (Index t = 0; t < t_count; ++t) {
    for (Index i = 0; i < n; ++i) {
      const double u1 = normal(rng_x);
      const double u2 = normal(rng_x);
      const double u3 = normal(rng_x);
      lagged(i) = 0.3 * lagged(i) + u2;
      x[static_cast<std::size_t>(rows[0])](i, t) = sigma(t) * u1;
      x[static_cast<std::size_t>(rows[1])](i, t) = lagged(i);
      x[static_cast<std::size_t>(rows[2])](i, t) = u3;
      x[static_cast<std::size_t>(rows[3])](i, t) = 1.0;
    }
  }

  Matrix f(t_count, k);
  Vector prev(k);
  const double f0_sd = 1.0 / std::sqrt(0.91);
  for (Index j = 0; j < k; ++j) prev(j) = 1.0 / 0.7 + f0_sd * normal(rng_f);
  for (Index t = 0; t < t_count; ++t) {
    for (Index j = 0; j < k; ++j) prev(j) = 0.3 * prev(j) + 1.0 + normal(rng_f);
    f.row(t) = prev.transpose();
  }

  SimTruth truth;
  truth.a_full = Vector::Zero(n * p);
  truth.b_full = Matrix::Zero(n * p, k);
  for (Index i = 0; i < n; ++i) {
    const double theta = normal(rng_load);
    const double delta = unif13(rng_load);
    const Index base = i * p;
    truth.a_full(base + rows[0]) = 1.0;
    truth.a_full(base + rows[1]) = spec.which == 1 ? theta : 1.0;
    truth.b_full(base + rows[2], 0) = 2.0;
    truth.b_full(base + rows[3], 1) = spec.which == 3 ? 2.0 : delta;
  }
  truth.factors = f;
  truth.pi_full = truth.a_full * Vector::Ones(t_count).transpose() + truth.b_full * f.transpose();

  const double eps_sd = std::sqrt(spec.noise_variance);
  Matrix y(n, t_count);
  for (Index t = 0; t < t_count; ++t) {
    for (Index i = 0; i < n; ++i) {
      double v = 0.0;
      for (Index r = 0; r < p; ++r) v += x[static_cast<std::size_t>(r)](i, t) * truth.pi_full(i * p + r, t);
      y(i, t) = v + eps_sd * normal(rng_eps);
    }
  }
  truth.panel = Panel(std::move(y), x);
  return truth;
}

TrueParams family_truth(const SimTruth& truth, FamilyKind kind) {
  const Index p = truth.panel.n_covariates();
  const Index n = truth.panel.n_assets();
  TrueParams out;
  switch (kind) {
    case FamilyKind::Unconstrained:
      out.pi.main = truth.pi_full;
      out.alpha = truth.a_full;
      out.beta = truth.b_full;
      break;
    case FamilyKind::Semiparametric: {
      for (Index r = 1; r < p; ++r)
        if (!same_rows(truth.pi_full, p, r) || !same_rows(truth.b_full, p, r) ||
            !same_rows(Matrix(truth.a_full), p, r))
          fail(ErrorKind::ConfigError, "design is not semiparametric (needs the constant covariate first)");
      out.pi.main.resize(n, truth.pi_full.cols());
      out.alpha.resize(n);
      out.beta.resize(n, truth.b_full.cols());
      for (Index i = 0; i < n; ++i) {
        out.pi.main.row(i) = truth.pi_full.row(i * p);
        out.alpha(i) = truth.a_full(i * p);
        out.beta.row(i) = truth.b_full.row(i * p);
      }
      out.pi.star = truth.pi_full.middleRows(1, p - 1);
      out.alpha_star = truth.a_full.segment(1, p - 1);
      out.beta_star = truth.b_full.middleRows(1, p - 1);
      break;
    }
    case FamilyKind::Homogeneous:
      for (Index r = 0; r < p; ++r)
        if (!same_rows(truth.pi_full, p, r) || !same_rows(truth.b_full, p, r) ||
            !same_rows(Matrix(truth.a_full), p, r))
          fail(ErrorKind::ConfigError, "design is not homogeneous across assets");
      out.pi.main = truth.pi_full.topRows(p);
      out.alpha = truth.a_full.head(p);
      out.beta = truth.b_full.topRows(p);
      break;
  }
  return out;
}

std::vector<std::string> metric_names(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Unconstrained: return {"pi", "a", "B", "F"};
    case FamilyKind::Semiparametric: return {"pi_diamond", "pi_star", "mu", "Lambda", "phi", "Phi", "F"};
    case FamilyKind::Homogeneous: return {"pi0", "phi0", "Phi0", "F0"};
  }
  return {};
}

std::uint64_t replication_seed(std::uint64_t base, int rep) {
  return derive_seed(base, "replication", static_cast<std::uint64_t>(rep));
}

namespace {

// Figure-curve MSE: Pi / (NT), the stacked (Pi_diamond; sqrt(N) Pi_star) / (NT)
// or Pi_0 / T.
double curve_mse(const DecisionMatrix& est, const TrueParams& truth, FamilyKind kind, Index n, Index t) {
  const double nn = static_cast<double>(n);
  const double tt = static_cast<double>(t);
  switch (kind) {
    case FamilyKind::Unconstrained: return sq(est.main - truth.pi.main) / (nn * tt);
    case FamilyKind::Semiparametric:
      return (sq(est.main - truth.pi.main) + nn * sq(est.star - truth.pi.star)) / (nn * tt);
    case FamilyKind::Homogeneous: return sq(est.main - truth.pi.main) / tt;
  }
  return kNaN;
}

std::vector<std::pair<std::string, double>> table_metrics(const FactorEstimate& est, const DecisionMatrix& pi_hat,
                                                          const TrueParams& truth, const Matrix& f_true,
                                                          FamilyKind kind, bool zero_alpha) {
  const double nn = static_cast<double>(est.n_assets);
  const double tt = static_cast<double>(est.n_periods);
  const bool has_h = est.k_hat >= 1;
  Matrix h, h_inv_t;
  if (has_h) {
    h = rotation_align(f_true, est.factors, !zero_alpha);
    h_inv_t = pseudo_inverse(h.transpose());
  }
  const double f_err = has_h ? sq(est.factors - f_true * h_inv_t) / tt : kNaN;
  auto loading = [&](const Matrix& b_hat, const Matrix& b_true, double scale) {
    return has_h ? sq(b_hat - b_true * h) / scale : kNaN;
  };
  auto intercept = [&](const Vector& a_hat, const Vector& a_true, double scale) {
    return zero_alpha ? kNaN : sq(a_hat - a_true) / scale;
  };

  switch (kind) {
    case FamilyKind::Unconstrained:
      return {{"pi", sq(pi_hat.main - truth.pi.main) / (nn * tt)},
              {"a", intercept(est.alpha, truth.alpha, nn)},
              {"B", loading(est.beta, truth.beta, nn)},
              {"F", f_err}};
    case FamilyKind::Semiparametric:
      return {{"pi_diamond", sq(pi_hat.main - truth.pi.main) / (nn * tt)},
              {"pi_star", sq(pi_hat.star - truth.pi.star) / tt},
              {"mu", intercept(est.alpha, truth.alpha, nn)},
              {"Lambda", loading(est.beta, truth.beta, nn)},
              {"phi", intercept(est.alpha_star, truth.alpha_star, 1.0)},
              {"Phi", loading(est.beta_star, truth.beta_star, 1.0)},
              {"F", f_err}};
    case FamilyKind::Homogeneous:
      return {{"pi0", sq(pi_hat.main - truth.pi.main) / tt},
              {"phi0", intercept(est.alpha, truth.alpha, 1.0)},
              {"Phi0", loading(est.beta, truth.beta, 1.0)},
              {"F0", f_err}};
  }
  return {};
}

}  // namespace

RepMetrics run_replication(const DgpSpec& spec, const StudyPlan& plan) {
  const FamilyKind kind = plan.family.kind;
  DgpSpec local = spec;
  local.intercept_first = spec.intercept_first || kind == FamilyKind::Semiparametric;
  const SimTruth truth = generate(local);
  const TrueParams target = family_truth(truth, kind);
  const Panel& panel = truth.panel;
  const Problem problem(panel, plan.family);

  RepMetrics out;
  out.seed = spec.seed;
  out.chosen_c = plan.fixed_c;
  if (plan.cv) {
    CvPlan cv = *plan.cv;
    cv.seed = derive_seed(spec.seed, "folds");
    out.chosen_c = cross_validate(panel, plan.family, cv, plan.solver).chosen_c;
  }

  SolverConfig config = plan.solver;
  config.lambda = default_lambda(panel, kind, out.chosen_c);
  const SolveResult result = solve(problem, config);
  LowRankFit fit{plan.family, panel.n_assets(), result.solution, config.lambda, result.report};
  const double delta = plan.delta ? *plan.delta : default_delta(panel, kind);
  const FactorEstimate est = extract_factors(fit, delta);

  out.k_hat = est.k_hat;
  out.solver_converged = result.report.converged;
  out.curve_mse = curve_mse(result.solution, target, kind, panel.n_assets(), panel.n_periods());
  out.values = table_metrics(est, result.solution, target, truth.factors, kind, plan.family.zero_alpha);

  // Sweep from large to small c with warm starts.
  out.sweep_mse.assign(plan.sweep.size(), kNaN);
  std::optional<DecisionMatrix> previous;
  for (std::size_t s = plan.sweep.size(); s-- > 0;) {
    SolverConfig sc = plan.solver;
    sc.lambda = default_lambda(panel, kind, plan.sweep[s]);
    sc.initial = sc.lambda > 0.0 ? previous : std::nullopt;
    const SolveResult r = solve(problem, sc);
    out.sweep_mse[s] = curve_mse(r.solution, target, kind, panel.n_assets(), panel.n_periods());
    previous = r.solution;
  }
  return out;
}

SimReport run_study(const DgpSpec& spec, const StudyPlan& plan) {
  if (plan.reps < 1) fail(ErrorKind::InvalidInput, "reps must be >= 1");
  for (std::size_t s = 1; s < plan.sweep.size(); ++s)
    if (!(plan.sweep[s] > plan.sweep[s - 1])) fail(ErrorKind::InvalidInput, "sweep grid must be strictly ascending");
  // Fail fast on an incompatible (design, family) pair.
  {
    DgpSpec probe = spec;
    probe.n = std::max<Index>(spec.n, 2);
    probe.t = std::max<Index>(spec.t, 2);
    probe.intercept_first = spec.intercept_first || plan.family.kind == FamilyKind::Semiparametric;
    family_truth(generate(probe), plan.family.kind);
  }

  SimReport report;
  report.spec = spec;
  report.plan = plan;
  report.reps.resize(static_cast<std::size_t>(plan.reps));

#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < plan.reps; ++r) {
    DgpSpec local = spec;
    local.seed = replication_seed(spec.seed, r);
    RepMetrics m;
    try {
      m = run_replication(local, plan);
    } catch (const std::exception& e) {
      m = RepMetrics{};
      m.seed = local.seed;
      m.failed = true;
      m.failure = e.what();
    }
    report.reps[static_cast<std::size_t>(r)] = std::move(m);
  }

  // Reduction in replication order.
  Aggregate& agg = report.aggregate;
  agg.names = metric_names(plan.family.kind);
  const std::size_t n_metrics = agg.names.size();
  std::vector<double> sum_all(n_metrics, 0.0), sum_ok(n_metrics, 0.0);
  std::vector<int> cnt_all(n_metrics, 0), cnt_ok(n_metrics, 0);
  std::vector<double> sweep_sum(plan.sweep.size(), 0.0);
  std::vector<int> sweep_cnt(plan.sweep.size(), 0);
  std::map<double, int> chosen;
  int correct = 0;
  double curve_sum = 0.0;
  for (const RepMetrics& m : report.reps) {
    if (m.failed) {
      ++report.failures;
      continue;
    }
    ++agg.count_all;
    const bool ok = m.k_hat == kSimFactors;
    if (ok) {
      ++correct;
      ++agg.count_correct;
    }
    curve_sum += m.curve_mse;
    ++chosen[m.chosen_c];
    for (std::size_t j = 0; j < n_metrics; ++j) {
      const double v = m.values[j].second;
      if (!std::isfinite(v)) continue;
      sum_all[j] += v;
      ++cnt_all[j];
      if (ok) {
        sum_ok[j] += v;
        ++cnt_ok[j];
      }
    }
    for (std::size_t s = 0; s < m.sweep_mse.size(); ++s)
      if (std::isfinite(m.sweep_mse[s])) {
        sweep_sum[s] += m.sweep_mse[s];
        ++sweep_cnt[s];
      }
  }
  agg.all_reps.resize(n_metrics);
  agg.correct_k.resize(n_metrics);
  for (std::size_t j = 0; j < n_metrics; ++j) {
    agg.all_reps[j] = cnt_all[j] > 0 ? sum_all[j] / cnt_all[j] : kNaN;
    agg.correct_k[j] = cnt_ok[j] > 0 ? sum_ok[j] / cnt_ok[j] : kNaN;
  }
  report.k_correct_rate = static_cast<double>(correct) / static_cast<double>(plan.reps);
  report.curve_mse_mean = agg.count_all > 0 ? curve_sum / agg.count_all : kNaN;
  report.sweep_mse_mean.resize(plan.sweep.size());
  for (std::size_t s = 0; s < plan.sweep.size(); ++s)
    report.sweep_mse_mean[s] = sweep_cnt[s] > 0 ? sweep_sum[s] / sweep_cnt[s] : kNaN;
  report.chosen_c_counts.assign(chosen.begin(), chosen.end());
  return report;
}

}  // namespace nucfactor
