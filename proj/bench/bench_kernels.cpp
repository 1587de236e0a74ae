// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include "nucfactor/simulate.hpp"

using namespace nucfactor;

namespace {

SimTruth dgp1(Index n, Index t) { return generate(DgpSpec{1, n, t, 11, 4.0, false}); }

void BM_LossGradientParallel(benchmark::State& state) {
  const SimTruth truth = dgp1(state.range(0), state.range(1));
  const Problem problem(truth.panel, {FamilyKind::Unconstrained, false});
  const Matrix z = Matrix::Constant(problem.stacked_rows(), problem.stacked_cols(), 0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(problem.stacked_loss(z));
    benchmark::DoNotOptimize(problem.stacked_gradient(z));
  }
}

void BM_LossGradientSerial(benchmark::State& state) {
  const SimTruth truth = dgp1(state.range(0), state.range(1));
  const Problem problem(truth.panel, {FamilyKind::Unconstrained, false});
  const Matrix z = Matrix::Constant(problem.stacked_rows(), problem.stacked_cols(), 0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(problem.stacked_loss_serial(z));
    benchmark::DoNotOptimize(problem.stacked_gradient_serial(z));
  }
}

StudyPlan small_study() {
  StudyPlan plan;
  plan.family = {FamilyKind::Homogeneous, false};
  plan.fixed_c = 0.3;
  plan.reps = 8;
  return plan;
}

const DgpSpec kStudySpec{3, 40, 40, 5, 4.0, false};

void BM_StudyParallel(benchmark::State& state) {
  const StudyPlan plan = small_study();
  for (auto _ : state) benchmark::DoNotOptimize(run_study(kStudySpec, plan));
}

void BM_StudySerial(benchmark::State& state) {
  const StudyPlan plan = small_study();
  for (auto _ : state) {
    for (int r = 0; r < plan.reps; ++r) {
      DgpSpec rep = kStudySpec;
      rep.seed = replication_seed(kStudySpec.seed, r);
      benchmark::DoNotOptimize(run_replication(rep, plan));
    }
  }
}

}  // namespace

BENCHMARK(BM_LossGradientParallel)->Args({50, 50})->Args({200, 200})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LossGradientSerial)->Args({50, 50})->Args({200, 200})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_StudyParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StudySerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
