#include <benchmark/benchmark.h>

#include <vector>

#include "eretrain/env.hpp"
#include "eretrain/nn.hpp"
#include "eretrain/rollout.hpp"
#include "eretrain/verify.hpp"

using namespace eretrain;

static void BM_MlpForward(benchmark::State& state) {
    Rng rng(1);
    const Mlp net = Mlp::init({10, 64, 64, 2}, rng);
    const MatrixXd x = MatrixXd::Random(10, state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(128)->Arg(4000);

static void BM_MlpBackward(benchmark::State& state) {
    Rng rng(2);
    const Mlp net = Mlp::init({10, 64, 64, 2}, rng);
    const MatrixXd x = MatrixXd::Random(10, state.range(0));
    Mlp::Cache cache;
    const MatrixXd y = net.forward(x, &cache);
    const MatrixXd d = MatrixXd::Ones(y.rows(), y.cols());
    for (auto _ : state) benchmark::DoNotOptimize(net.backward(cache, d));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpBackward)->Arg(128)->Arg(4000);

static void BM_Ibp(benchmark::State& state) {
    Rng rng(3);
    const Mlp net = Mlp::init({10, 64, 64, 2}, rng);
    const Box box = Box::uniform(10, 0.4, 0.45);
    for (auto _ : state) benchmark::DoNotOptimize(ibp_forward(net, box));
}
BENCHMARK(BM_Ibp);

static void BM_QuantifyViolation(benchmark::State& state) {
    Rng rng(4);
    VerifTask task{Mlp::init({2, 16, 1}, rng), Box::uniform(2, -1.0, 1.0), {{{1.0}, 0.0}}, 1.0 / 64.0, 100000};
    for (auto _ : state) benchmark::DoNotOptimize(quantify_violation(task));
}
BENCHMARK(BM_QuantifyViolation);

static void BM_GridNavStep(benchmark::State& state) {
    GridNav env;
    Rng rng(5);
    env.reset_uniform(rng);
    const std::vector<double> a{0.5, 0.1};
    for (auto _ : state) {
        auto r = env.step(a);
        if (r.done) env.reset_uniform(rng);
        benchmark::DoNotOptimize(r);
    }
}
BENCHMARK(BM_GridNavStep);

static void BM_GridNavResetTo(benchmark::State& state) {
    GridNav env;
    Rng rng(6);
    const State s = env.reset_uniform(rng);
    for (auto _ : state) benchmark::DoNotOptimize(env.reset_to(s));
}
BENCHMARK(BM_GridNavResetTo);

static void BM_Gae(benchmark::State& state) {
    Rng rng(7);
    const auto n = static_cast<std::size_t>(state.range(0));
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = rng.normal();
        v[i] = rng.normal();
    }
    for (auto _ : state) benchmark::DoNotOptimize(gae(r, v, d, 0.0, 0.99, 0.95));
}
BENCHMARK(BM_Gae)->Arg(4000);

BENCHMARK_MAIN();
