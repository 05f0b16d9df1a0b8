#include <cmath>

#include <benchmark/benchmark.h>

#include "ntk/classifiers.hpp"
#include "ntk/depth_dynamics.hpp"
#include "ntk/dual_activation.hpp"
#include "ntk/sphere_data.hpp"

namespace {

void BM_PsiNearPole(benchmark::State& state) {
    const ntk::Dual dual = ntk::preset("corollary_d", 2);
    const double z = 1.0 - std::pow(10.0, -static_cast<double>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(ntk::psi(dual, z));
}
BENCHMARK(BM_PsiNearPole)->DenseRange(2, 8, 2);

void BM_LogNtk(benchmark::State& state) {
    const ntk::Dual dual = ntk::preset("normalized_erf");
    const int L = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(ntk::log_ntk(dual, 0.7, L));
    state.SetComplexityN(L);
}
BENCHMARK(BM_LogNtk)->RangeMultiplier(4)->Range(16, 4096)->Complexity(benchmark::oN);

void BM_DepthLimitKernelMachine(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto spec = ntk::two_cap_mixture(2, 0.5, true, 1);
    const auto train = ntk::sample_mixture(spec, n, "bench/train");
    const Eigen::MatrixXd queries = ntk::sample_uniform(2, 200, 2);
    const auto kernel = ntk::deep_ntk_kernel(ntk::preset("corollary_d", 2), std::nullopt);
    for (auto _ : state) benchmark::DoNotOptimize(ntk::kernel_machine_predict(kernel, train.data, queries));
    state.SetComplexityN(n);
}
BENCHMARK(BM_DepthLimitKernelMachine)->RangeMultiplier(4)->Range(64, 1024)->Unit(benchmark::kMillisecond);

void BM_FiniteDepthGramSolve(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto X = ntk::sample_uniform(3, n, 3);
    std::vector<int> y(static_cast<std::size_t>(n), 1);
    for (int i = 0; i < n; i += 2) y[static_cast<std::size_t>(i)] = -1;
    const ntk::LabeledDataset data(X, y);
    const auto kernel = ntk::deep_ntk_kernel(ntk::preset("relu"), 50);
    for (auto _ : state) {
        const auto system = ntk::build_gram(kernel, data, 1e-8);
        benchmark::DoNotOptimize(system.solve(Eigen::VectorXd::Ones(n)));
    }
    state.SetComplexityN(n);
}
BENCHMARK(BM_FiniteDepthGramSolve)->RangeMultiplier(2)->Range(64, 512)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
