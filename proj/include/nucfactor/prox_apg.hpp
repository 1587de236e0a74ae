#pragma once

// Accelerated proximal gradient solver for
//     min_Gamma  f(Gamma) + lambda * ||Gamma||_*
// with backtracking on the step parameter tau, Nesterov momentum and a
// subgradient-based stopping rule.

#include <optional>
#include <vector>

#include "nucfactor/problems.hpp"

namespace nucfactor {

struct SolverConfig {
  double lambda = 0.0;
  double eta = 0.8;
  double tolerance = 1e-5;
  int max_iterations = 5000;
  /// Skip the line search and use tau_k = L_f throughout.
  bool fixed_step = false;
  /// Warm start; zero when absent.
  std::optional<DecisionMatrix> initial;
};

struct SolverReport {
  int iterations = 0;
  bool converged = false;
  double final_subgradient_ratio = 0.0;
  /// F(Gamma*_k) of every accepted post-prox iterate.
  std::vector<double> objective_trace;
  /// Q_tau(A, G) - F(A) at every accepted step (>= 0 up to rounding).
  std::vector<double> majorization_margin;
  double final_tau = 0.0;
  /// Number of iterations whose line search hit the cap and fell back to L_f.
  int backtrack_cap_hits = 0;
  /// Largest |entry| of the homogeneous block (semiparametric only).
  double star_max_abs = 0.0;
};

struct SolveResult {
  DecisionMatrix solution;
  SolverReport report;
};

/// Maximum number of tau adjustments inside one line search.
inline constexpr int kMaxBacktracks = 60;

/// One proximal step S_{lambda/tau}(z - grad/tau) in stacked coordinates.
Shrinkage prox_step(const Matrix& z, const Matrix& grad, double tau, double lambda);

/// Solves the penalized problem. lambda == 0 short-circuits to
/// Problem::least_squares(). Non-convergence is reported, not thrown; a
/// non-finite objective throws NumericalFailure.
SolveResult solve(const Problem& problem, const SolverConfig& config);
SolveResult solve(const Panel& panel, ModelFamily family, const SolverConfig& config);

/// Full objective f + lambda * penalty, with the penalty on the stacked scale.
double objective(const Problem& problem, const DecisionMatrix& g, double lambda);

/// lambda = c sqrt((Np + T) log N) for the unconstrained and semiparametric
/// families; lambda_0 = c sqrt(N (p + T) log N) for the homogeneous family.
double default_lambda(const Panel& panel, FamilyKind kind, double c);
double default_lambda(Index n, Index t, Index p, FamilyKind kind, double c);

}  // namespace nucfactor
