#include "nucfactor/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>

#include "nucfactor/errors.hpp"

namespace nucfactor {

std::vector<double> simulation_grid() {
  return {0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.5, 2.0};
}

std::vector<double> empirical_grid() {
  std::vector<double> g = {0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0};
  for (double& c : g) c /= 100.0;
  return g;
}

std::vector<double> grid_preset(const std::string& name) {
  if (name == "simulation") return simulation_grid();
  if (name == "empirical") return empirical_grid();
  fail(ErrorKind::ConfigError, "unknown grid preset '" + name + "'");
}

FoldMap assign_folds(const Panel& panel, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) fail(ErrorKind::InvalidInput, "cross-validation needs at least 2 folds");
  const Index n = panel.n_assets();
  const Index t_count = panel.n_periods();
  std::vector<Index> cells;
  cells.reserve(static_cast<std::size_t>(panel.observed_count()));
  for (Index t = 0; t < t_count; ++t)
    for (Index i = 0; i < n; ++i)
      if (panel.observed(i, t)) cells.push_back(t * n + i);
  if (static_cast<Index>(cells.size()) < n_folds)
    fail(ErrorKind::DegenerateInput, "fewer observed cells than folds");

  std::mt19937_64 rng(seed);
  std::shuffle(cells.begin(), cells.end(), rng);
  FoldMap folds = FoldMap::Constant(n, t_count, -1);
  for (std::size_t k = 0; k < cells.size(); ++k)
    folds(cells[k] % n, cells[k] / n) = static_cast<int>(k % static_cast<std::size_t>(n_folds));
  return folds;
}

namespace {

struct Task {
  int fold;
  std::vector<std::size_t> grid_order;
};

}  // namespace

CvResult cross_validate(const Panel& panel, ModelFamily family, const CvPlan& plan, const SolverConfig& solver) {
  if (plan.grid.empty()) fail(ErrorKind::InvalidInput, "empty tuning grid");
  for (std::size_t g = 0; g < plan.grid.size(); ++g) {
    if (!(plan.grid[g] >= 0.0) || !std::isfinite(plan.grid[g]))
      fail(ErrorKind::InvalidInput, "grid values must be finite and nonnegative");
    if (g > 0 && !(plan.grid[g] > plan.grid[g - 1])) fail(ErrorKind::InvalidInput, "grid must be strictly ascending");
  }
  const FoldMap folds = assign_folds(panel, plan.n_folds, plan.seed);
  const std::size_t n_grid = plan.grid.size();
  const auto n_folds = static_cast<std::size_t>(plan.n_folds);

  CvResult out;
  out.grid = plan.grid;
  out.fold_sizes.assign(n_folds, 0);
  for (Index t = 0; t < folds.cols(); ++t)
    for (Index i = 0; i < folds.rows(); ++i)
      if (folds(i, t) >= 0) ++out.fold_sizes[static_cast<std::size_t>(folds(i, t))];

  std::vector<Task> tasks;
  std::vector<std::size_t> descending(n_grid);
  std::iota(descending.rbegin(), descending.rend(), std::size_t{0});
  for (std::size_t l = 0; l < n_folds; ++l) {
    if (plan.warm_start) {
      tasks.push_back({static_cast<int>(l), descending});
    } else {
      for (std::size_t g = 0; g < n_grid; ++g) tasks.push_back({static_cast<int>(l), {g}});
    }
  }

  // mse[g * L + l]; NaN marks a numerical failure.
  std::vector<double> mse(n_grid * n_folds, 0.0);
  std::vector<std::exception_ptr> errors(tasks.size());

#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    try {
      const Task& task = tasks[k];
      const Panel train = panel.without_cells(folds == task.fold);
      const Problem problem(train, family);
      std::optional<DecisionMatrix> previous;
      for (std::size_t g : task.grid_order) {
        SolverConfig config = solver;
        config.lambda = default_lambda(panel, family.kind, plan.grid[g]);
        config.initial = (config.lambda > 0.0) ? previous : std::nullopt;
        double err = 0.0;
        try {
          const SolveResult fit = solve(problem, config);
          for (Index t = 0; t < folds.cols(); ++t)
            for (Index i = 0; i < folds.rows(); ++i)
              if (folds(i, t) == task.fold) {
                const double r = panel.y(i, t) - fitted_value(panel, family.kind, fit.solution, i, t);
                err += r * r;
              }
          err /= static_cast<double>(out.fold_sizes[static_cast<std::size_t>(task.fold)]);
          if (!std::isfinite(err)) err = std::numeric_limits<double>::quiet_NaN();
          previous = fit.solution;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::NumericalFailure) throw;
          err = std::numeric_limits<double>::quiet_NaN();
          previous.reset();
        }
        mse[g * n_folds + static_cast<std::size_t>(task.fold)] = err;
      }
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  out.per_c_mse.assign(n_grid, 0.0);
  out.valid.assign(n_grid, true);
  double best = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t g = 0; g < n_grid; ++g) {
    double sum = 0.0;
    for (std::size_t l = 0; l < n_folds; ++l) sum += mse[g * n_folds + l];
    if (std::isnan(sum)) {
      out.valid[g] = false;
      out.per_c_mse[g] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    out.per_c_mse[g] = sum / static_cast<double>(n_folds);
    if (out.per_c_mse[g] < best) {
      best = out.per_c_mse[g];
      out.chosen_c = plan.grid[g];
      any = true;
    }
  }
  if (!any) fail(ErrorKind::TuningFailure, "every grid value failed during cross-validation");
  return out;
}

}  // namespace nucfactor
