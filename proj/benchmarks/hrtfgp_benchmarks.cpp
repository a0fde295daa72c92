#include <cmath>
#include <random>

#include <benchmark/benchmark.h>

#include "hrtfgp/active.hpp"
#include "hrtfgp/gp.hpp"
#include "hrtfgp/incremental_gp.hpp"
#include "hrtfgp/kernel.hpp"
#include "hrtfgp/selection.hpp"

namespace hrtfgp {
namespace {

Eigen::MatrixXd uniform_rows(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

KernelSpec spec_for(MaternNu nu, Eigen::Index d) {
  KernelSpec spec;
  spec.nu = nu;
  spec.length_scales = Eigen::VectorXd::Constant(d, std::sqrt(double(d)));
  return spec;
}

MaternNu nu_arg(std::int64_t i) { return kAllNus[static_cast<std::size_t>(i)]; }

// Symmetric Gram matrix of N rows with 128 MP-like columns.
void BM_Gram(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const Eigen::Index n = state.range(0);
  const Eigen::MatrixXd X = uniform_rows(rng, n, 128);
  const KernelSpec spec = spec_for(nu_arg(state.range(1)), 128);
  for (auto _ : state) benchmark::DoNotOptimize(gram(spec, X));
  state.SetComplexityN(n);
}
BENCHMARK(BM_Gram)->ArgsProduct({{250, 500, 1000}, {0, 1, 2}})->Unit(benchmark::kMillisecond);

// Growing a posterior at N* test inputs to 200 points, one inclusion at a time.
void BM_IncrementalInclude(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const Eigen::Index n_star = state.range(0);
  const Eigen::MatrixXd X = uniform_rows(rng, 200, 10);
  const Eigen::MatrixXd Y = uniform_rows(rng, 200, 3);
  const Eigen::MatrixXd Xs = uniform_rows(rng, n_star, 10);
  const KernelSpec spec = spec_for(MaternNu::inf, 10);
  for (auto _ : state) {
    IncrementalGp gp(spec, 0.1, Xs, 3);
    for (Eigen::Index i = 0; i < X.rows(); ++i) gp.include(X.row(i).transpose(), Y.row(i));
    benchmark::DoNotOptimize(gp.mean().data());
  }
  state.SetItemsProcessed(state.iterations() * X.rows());
}
BENCHMARK(BM_IncrementalInclude)->Arg(100)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

// The batch refit that the incremental update replaces.
void BM_BatchRefit(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const Eigen::Index n = state.range(0);
  const Eigen::MatrixXd X = uniform_rows(rng, n, 10);
  const Eigen::MatrixXd Y = uniform_rows(rng, n, 3);
  const KernelSpec spec = spec_for(MaternNu::inf, 10);
  for (auto _ : state) benchmark::DoNotOptimize(fit_posterior(spec, 0.1, X, Y).log_det);
}
BENCHMARK(BM_BatchRefit)->Arg(50)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);

// Greedy forward selection of 20 points out of N.
void BM_Gfs(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const Eigen::Index n = state.range(0);
  const auto risk = static_cast<RiskKind>(state.range(1));
  const Eigen::MatrixXd X = uniform_rows(rng, n, 8);
  Eigen::MatrixXd Y = uniform_rows(rng, n, 3);
  Y.rowwise().normalize();
  const KernelSpec spec = spec_for(MaternNu::three_half, 8);
  for (auto _ : state) benchmark::DoNotOptimize(greedy_forward_select(X, Y, 20, risk, spec, 0.1).order);
}
BENCHMARK(BM_Gfs)->ArgsProduct({{200, 400}, {0, 1, 2}})->Unit(benchmark::kMillisecond);

// Acquisition over a candidate pool for one target.
void BM_WeightedExpectedLoss(benchmark::State& state) {
  std::mt19937_64 rng(5);
  const Eigen::Index n = state.range(0);
  const Eigen::MatrixXd mean = uniform_rows(rng, n, 1);
  const Eigen::VectorXd var = uniform_rows(rng, n, 1).col(0).cwiseAbs();
  const Eigen::VectorXd eta = Eigen::VectorXd::Constant(1, -0.5);
  const Eigen::VectorXd weights = Eigen::VectorXd::Ones(1);
  for (auto _ : state) benchmark::DoNotOptimize(weighted_expected_loss(mean, var, eta, weights));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_WeightedExpectedLoss)->Arg(2000)->Arg(20000);

}  // namespace
}  // namespace hrtfgp

BENCHMARK_MAIN();
