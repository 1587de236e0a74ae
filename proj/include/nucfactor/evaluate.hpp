#pragma once

// In-sample and recursive out-of-sample R^2 measures.

#include <optional>
#include <string>
#include <vector>

#include "nucfactor/extract.hpp"
#include "nucfactor/tuning.hpp"

namespace nucfactor {

/// Total, time-series average (over assets) and cross-sectional average (over
/// periods) R^2, all relative to the zero benchmark sum y^2. Assets or periods
/// with a zero denominator are left out of their average and counted.
struct FitScores {
  double r2_total = 0.0;
  double r2_ts_avg = 0.0;
  double r2_cs_avg = 0.0;
  Index excluded_assets = 0;
  Index excluded_periods = 0;
};

/// The three measures for predictions `pred` (N x T) over the cells of `cells`.
FitScores r2_scores(const Panel& panel, const Matrix& pred, const Mask& cells);

/// x_it' a_i + x_it' B_i f_t for every cell (0 where masked).
Matrix fitted_returns(const Panel& panel, const FactorEstimate& est);

/// x_it' (a_i + B_i lambda) with lambda the time mean of the estimated factors.
Vector predict_period(const Panel& panel, Index t, const FactorEstimate& est);

FitScores in_sample_r2(const Panel& panel, const FactorEstimate& est);

struct OosPlan {
  ModelFamily family;
  /// First evaluated period, 1-based: periods t >= burn_in are predicted from
  /// a refit on periods 1..t-1.
  Index burn_in = 2;
  /// Tuning constant; when absent it is cross-validated once on periods
  /// 1..burn_in-1.
  std::optional<double> fixed_c;
  CvPlan cv;
  /// Re-run the cross-validation at every period.
  bool cv_each_period = false;
  SolverConfig solver;
  /// Prescribed factor counts; empty selects K by the threshold. A count larger
  /// than the refit matrix allows is reduced to its maximum.
  std::vector<Index> ranks;
  std::optional<double> delta;
  bool warm_start = true;
};

struct SkippedPeriod {
  Index period = 0;  // 1-based
  std::string reason;
};

struct OosReport {
  /// One entry per requested rank (a single entry for threshold selection).
  std::vector<Index> ranks;
  std::vector<FitScores> scores;
  std::vector<Matrix> predictions;  // N x T, NaN where not predicted
  std::vector<Index> evaluated_periods;  // 1-based
  std::vector<SkippedPeriod> skipped;
  double c_used = 0.0;
};

OosReport out_of_sample_r2(const Panel& panel, const OosPlan& plan);

}  // namespace nucfactor
