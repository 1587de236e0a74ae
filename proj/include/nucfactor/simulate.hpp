#pragma once

// Monte Carlo designs DGP1-DGP3 (p = 4 covariates, K = 2 factors) and the
// replication runner producing rotation-aligned error metrics.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nucfactor/extract.hpp"
#include "nucfactor/tuning.hpp"

namespace nucfactor {

inline constexpr Index kSimCovariates = 4;
inline constexpr Index kSimFactors = 2;

struct DgpSpec {
  int which = 1;
  Index n = 50;
  Index t = 50;
  std::uint64_t seed = 0;
  double noise_variance = 4.0;
  /// Put the constant covariate first (required by the semiparametric
  /// family). Otherwise the order is (sigma_t u1, AR(1), u3, 1).
  bool intercept_first = false;
};

FamilyKind default_family(int which);

struct SimTruth {
  Panel panel;
  /// Asset-by-asset a (Np) and B (Np x 2) in the panel's covariate order.
  Vector a_full;
  Matrix b_full;
  /// f_1..f_T as rows.
  Matrix factors;
  /// Noise-free Pi = a 1' + B F' (Np x T).
  Matrix pi_full;
};

SimTruth generate(const DgpSpec& spec);

/// True parameters in a family's compact layout (same fields as
/// FactorEstimate). Throws ConfigError when the design does not satisfy the
/// family's homogeneity restrictions.
struct TrueParams {
  DecisionMatrix pi;
  Vector alpha;
  Vector alpha_star;
  Matrix beta;
  Matrix beta_star;
};

TrueParams family_truth(const SimTruth& truth, FamilyKind kind);

struct RepMetrics {
  std::uint64_t seed = 0;
  double chosen_c = 0.0;
  Index k_hat = 0;
  bool solver_converged = false;
  bool failed = false;
  std::string failure;
  /// Figure-curve MSE of the regularized matrix.
  double curve_mse = 0.0;
  /// (name, value); names with an H-dependence are NaN when K_hat = 0.
  std::vector<std::pair<std::string, double>> values;
  /// Figure-curve MSE for each fixed c of the sweep (empty without sweep).
  std::vector<double> sweep_mse;
};

struct StudyPlan {
  ModelFamily family;
  /// CV over `cv.grid` when set; otherwise `fixed_c`.
  std::optional<CvPlan> cv;
  double fixed_c = 1.0;
  /// Extra fixed-c solves reported as a curve (figure-style sweep).
  std::vector<double> sweep;
  int reps = 1;
  SolverConfig solver;
  /// Threshold; default_delta when absent.
  std::optional<double> delta;
};

struct Aggregate {
  std::vector<std::string> names;
  /// Means over all non-failed replications and over those with K_hat = K.
  std::vector<double> all_reps;
  std::vector<double> correct_k;
  int count_all = 0;
  int count_correct = 0;
};

struct SimReport {
  DgpSpec spec;
  StudyPlan plan;
  std::vector<RepMetrics> reps;
  Aggregate aggregate;
  double k_correct_rate = 0.0;
  int failures = 0;
  double curve_mse_mean = 0.0;
  std::vector<double> sweep_mse_mean;
  /// Histogram of chosen c over the CV grid (or the fixed c).
  std::vector<std::pair<double, int>> chosen_c_counts;
};

/// Seed of replication r: derived from spec.seed and r only.
std::uint64_t replication_seed(std::uint64_t base, int rep);

RepMetrics run_replication(const DgpSpec& spec, const StudyPlan& plan);
SimReport run_study(const DgpSpec& spec, const StudyPlan& plan);

/// Metric names in report order for a family.
std::vector<std::string> metric_names(FamilyKind kind);

}  // namespace nucfactor
