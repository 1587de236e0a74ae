#include "nucfactor/prox_apg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nucfactor/errors.hpp"

namespace nucfactor {

namespace {

void validate(const SolverConfig& config) {
  if (!(config.lambda >= 0.0) || !std::isfinite(config.lambda))
    fail(ErrorKind::InvalidInput, "lambda must be finite and nonnegative");
  if (!(config.eta > 0.0 && config.eta < 1.0)) fail(ErrorKind::InvalidInput, "eta must lie in (0, 1)");
  if (!(config.tolerance > 0.0)) fail(ErrorKind::InvalidInput, "tolerance must be positive");
  if (config.max_iterations < 1) fail(ErrorKind::InvalidInput, "max_iterations must be >= 1");
}

double star_max_abs(const Problem& problem, const DecisionMatrix& g) {
  if (problem.kind() != FamilyKind::Semiparametric || g.star.size() == 0) return 0.0;
  return g.star.cwiseAbs().maxCoeff();
}

// f(A) <= Q_tau(A, G); the penalty appears on both sides and cancels. The
// slack absorbs rounding when tau equals L_f exactly.
double majorizer(double f_g, const Matrix& a, const Matrix& g, const Matrix& grad_g, double tau) {
  const Matrix step = a - g;
  return f_g + step.cwiseProduct(grad_g).sum() + 0.5 * tau * step.squaredNorm();
}

bool majorized(double f_a, double f_g, double q) { return f_a <= q + 1e-12 * (1.0 + std::abs(f_g)); }

}  // namespace

Shrinkage prox_step(const Matrix& z, const Matrix& grad, double tau, double lambda) {
  const Matrix target = z - grad / tau;
  if (lambda == 0.0) return Shrinkage{target, nuclear_norm(target), std::min(target.rows(), target.cols())};
  return soft_threshold(target, lambda / tau);
}

double objective(const Problem& problem, const DecisionMatrix& g, double lambda) {
  const Matrix z = problem.to_stacked(g);
  return problem.stacked_loss(z) + lambda * nuclear_norm(z);
}

SolveResult solve(const Problem& problem, const SolverConfig& config) {
  validate(config);
  const double lipschitz = problem.lipschitz();
  SolveResult out;

  if (config.lambda == 0.0) {
    out.solution = problem.least_squares();
    out.report.converged = true;
    out.report.final_tau = lipschitz;
    const double f = problem.loss(out.solution);
    if (!std::isfinite(f)) fail(ErrorKind::NumericalFailure, "least-squares objective is not finite");
    out.report.objective_trace.push_back(f);
    out.report.star_max_abs = star_max_abs(problem, out.solution);
    return out;
  }

  Matrix z_cur = config.initial ? problem.to_stacked(*config.initial)
                                : Matrix::Zero(problem.stacked_rows(), problem.stacked_cols());
  Matrix z_prev = z_cur;
  double w_prev = 1.0;
  double w_cur = 1.0;
  double tau_prev = lipschitz;

  Matrix best = z_cur;
  double best_objective = std::numeric_limits<double>::infinity();
  SolverReport& report = out.report;

  for (int k = 1; k <= config.max_iterations; ++k) {
    // Step 1: search point.
    const Matrix search = z_cur + ((w_prev - 1.0) / w_cur) * (z_cur - z_prev);
    const double f_search = problem.stacked_loss(search);
    const Matrix grad_search = problem.stacked_gradient(search);
    if (!std::isfinite(f_search)) fail(ErrorKind::NumericalFailure, "loss is not finite at the search point");

    // Step 2: backtracking on tau, capped at tau_0 = L_f.
    double tau = config.fixed_step ? lipschitz : config.eta * tau_prev;
    Shrinkage step;
    double f_step = 0.0;
    double q_step = 0.0;
    bool accepted = false;
    for (int j = 0; j < kMaxBacktracks; ++j) {
      step = prox_step(search, grad_search, tau, config.lambda);
      f_step = problem.stacked_loss(step.value);
      q_step = majorizer(f_search, step.value, search, grad_search, tau);
      if (config.fixed_step || majorized(f_step, f_search, q_step)) {
        accepted = true;
        break;
      }
      if (tau >= lipschitz) break;
      tau = std::min(tau / config.eta, lipschitz);
    }
    if (!accepted) {
      ++report.backtrack_cap_hits;
      if (tau != lipschitz) {
        tau = lipschitz;
        step = prox_step(search, grad_search, tau, config.lambda);
        f_step = problem.stacked_loss(step.value);
        q_step = majorizer(f_search, step.value, search, grad_search, tau);
      }
    }

    // Step 3 is the accepted prox point; Step 4 updates the momentum weight.
    const double f_total = f_step + config.lambda * step.nuclear_norm;
    if (!std::isfinite(f_total)) fail(ErrorKind::NumericalFailure, "objective is not finite");
    report.objective_trace.push_back(f_total);
    report.majorization_margin.push_back(q_step - f_step);
    const double w_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * w_cur * w_cur));

    // Step 5: subgradient of F at the new iterate.
    const Matrix d = tau * (search - step.value) + problem.stacked_gradient(step.value) - grad_search;
    const double ratio = d.norm() / (tau * std::max(1.0, step.value.norm()));

    if (f_total < best_objective) {
      best_objective = f_total;
      best = step.value;
    }
    z_prev = std::move(z_cur);
    z_cur = std::move(step.value);
    w_prev = w_cur;
    w_cur = w_next;
    tau_prev = tau;

    report.iterations = k;
    report.final_tau = tau;
    report.final_subgradient_ratio = ratio;
    if (ratio <= config.tolerance) {
      report.converged = true;
      break;
    }
  }

  out.solution = problem.from_stacked(report.converged ? z_cur : best);
  report.star_max_abs = star_max_abs(problem, out.solution);
  return out;
}

SolveResult solve(const Panel& panel, ModelFamily family, const SolverConfig& config) {
  const Problem problem(panel, family);
  return solve(problem, config);
}

double default_lambda(Index n, Index t, Index p, FamilyKind kind, double c) {
  if (!(c >= 0.0)) fail(ErrorKind::InvalidInput, "tuning constant c must be nonnegative");
  if (n < 2) fail(ErrorKind::DegenerateInput, "default lambda needs N >= 2");
  const double nn = static_cast<double>(n);
  const double tt = static_cast<double>(t);
  const double pp = static_cast<double>(p);
  const double log_n = std::log(nn);
  if (kind == FamilyKind::Homogeneous) return c * std::sqrt(nn * (pp + tt) * log_n);
  return c * std::sqrt((nn * pp + tt) * log_n);
}

double default_lambda(const Panel& panel, FamilyKind kind, double c) {
  return default_lambda(panel.n_assets(), panel.n_periods(), panel.n_covariates(), kind, c);
}

}  // namespace nucfactor
