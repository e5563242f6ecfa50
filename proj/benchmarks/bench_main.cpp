#include <benchmark/benchmark.h>

#include "bundleflow/flow.hpp"
#include "bundleflow/menu.hpp"
#include "bundleflow/net.hpp"
#include "bundleflow/stage1.hpp"

using namespace bundleflow;

namespace {

VectorField make_field(std::size_t m, std::uint64_t seed) {
    Rng rng(seed);
    return VectorField::make(m, {64, 64}, {32}, rng);
}

void BM_NetForward(benchmark::State& state) {
    const std::size_t m = static_cast<std::size_t>(state.range(0));
    Rng rng(11);
    DenseNet net(m, {128, 128, 128}, m * m);
    net.init(rng);
    Vec x(m);
    for (std::size_t i = 0; i < m; ++i) x[i] = rng.uniform();
    DenseNet::Workspace ws;
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, ws));
}
BENCHMARK(BM_NetForward)->Arg(5)->Arg(10)->Arg(20);

void BM_NetBackward(benchmark::State& state) {
    const std::size_t m = static_cast<std::size_t>(state.range(0));
    Rng rng(11);
    DenseNet net(m, {128, 128, 128}, m * m);
    net.init(rng);
    Vec x(m), upstream(m * m, 1.0);
    for (std::size_t i = 0; i < m; ++i) x[i] = rng.uniform();
    DenseNet::Workspace ws;
    net.forward(x, ws);
    DenseNet::Gradients grads;
    for (auto _ : state) {
        net.backward(ws, upstream, grads);
        benchmark::DoNotOptimize(grads.param_grad.data());
    }
}
BENCHMARK(BM_NetBackward)->Arg(5)->Arg(10);

void BM_Transport(benchmark::State& state) {
    const std::size_t m = static_cast<std::size_t>(state.range(0));
    VectorField vf = make_field(m, 3);
    FlowConfig cfg;
    Rng rng(7);
    Vec s0(m);
    for (std::size_t i = 0; i < m; ++i) s0[i] = rng.uniform();
    for (auto _ : state) benchmark::DoNotOptimize(ode_solve(vf, cfg, s0));
}
BENCHMARK(BM_Transport)->Arg(5)->Arg(10)->Arg(20);

void BM_ElementSupport(benchmark::State& state) {
    const std::size_t m = 10;
    const std::size_t D = static_cast<std::size_t>(state.range(0));
    VectorField vf = make_field(m, 3);
    FlowConfig cfg;
    Rng rng(5);
    Menu menu = init_menu(2, D, m, 1.0, rng);
    for (auto _ : state)
        benchmark::DoNotOptimize(
            element_support(menu.elements[0], vf, cfg, ReweightMode::Normalized));
}
BENCHMARK(BM_ElementSupport)->Arg(2)->Arg(8)->Arg(16);

void BM_RevenueLossGrad(benchmark::State& state) {
    const std::size_t m = 10;
    VectorField vf = make_field(m, 3);
    FlowConfig cfg;
    Rng rng(5);
    Menu menu = init_menu(16, 4, m, 1.0, rng);
    AuctionConfig ac{m, 1.0};
    SyntheticConfig gen;
    gen.count = 32;
    ValuationDataset ds = generate_synthetic(ac, gen, 9);
    Vec grad;
    for (auto _ : state) {
        benchmark::DoNotOptimize(revenue_loss_grad(menu, freeze_support(menu, vf, cfg),
                                                   ds.samples, vf, cfg, 0.1,
                                                   ReweightMode::Normalized, grad));
    }
}
BENCHMARK(BM_RevenueLossGrad)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
