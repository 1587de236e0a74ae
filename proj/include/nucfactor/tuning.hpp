#pragma once

// Cell-holdout cross-validation of the tuning constant c in
// lambda = default_lambda(panel, family, c).

#include <cstdint>
#include <string>
#include <vector>

#include "nucfactor/prox_apg.hpp"

namespace nucfactor {

/// {0, 0.05, 0.1, 0.2, ..., 0.9, 1, 1.5, 2}
std::vector<double> simulation_grid();
/// {0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1, 2, 5} / 100
std::vector<double> empirical_grid();
/// "simulation" or "empirical"; anything else throws ConfigError.
std::vector<double> grid_preset(const std::string& name);

struct CvPlan {
  int n_folds = 5;
  std::vector<double> grid = simulation_grid();
  std::uint64_t seed = 0;
  /// Solve each fold along the grid from large to small c, starting every
  /// solve from the previous one.
  bool warm_start = true;
};

struct CvResult {
  std::vector<double> grid;
  /// Mean over folds of the held-out MSE; NaN where the c is invalid.
  std::vector<double> per_c_mse;
  std::vector<bool> valid;
  double chosen_c = 0.0;
  std::vector<Index> fold_sizes;
};

using FoldMap = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic>;

/// Fold index (0..L-1) of every observed cell, -1 for masked cells. Folds are
/// a seeded shuffle of the observed cells cut into L blocks whose sizes differ
/// by at most one.
FoldMap assign_folds(const Panel& panel, int n_folds, std::uint64_t seed);

/// `solver` supplies tolerance / iteration settings; its lambda and initial
/// fields are ignored.
CvResult cross_validate(const Panel& panel, ModelFamily family, const CvPlan& plan,
                        const SolverConfig& solver = {});

}  // namespace nucfactor
