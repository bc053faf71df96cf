#include <benchmark/benchmark.h>

#include <microchar/models.hpp>
#include <microchar/nn/ops.hpp>

using namespace microchar;

namespace {

nn::Tensor random_input(int n, int c, int h, int w, std::uint64_t seed) {
    nn::Tensor t(n, c, h, w);
    Rng rng(seed);
    for (auto& v : t.data) v = static_cast<float>(rng.next_range(-1.0, 1.0));
    return t;
}

} // namespace

static void BM_Conv(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    const int ch = static_cast<int>(state.range(1));
    nn::Conv2d<float> conv(ch, ch, k);
    Rng rng(1);
    conv.init(rng);
    const nn::Tensor x = random_input(1, ch, 64, 64, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv.forward(x));
    }
    const double macs = static_cast<double>(ch) * ch * k * k * 64 * 64;
    state.counters["GMAC/s"] =
        benchmark::Counter(macs, benchmark::Counter::kIsIterationInvariantRate,
                           benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Conv)->Args({3, 32})->Args({5, 32})->Args({9, 32})->Unit(benchmark::kMicrosecond);

static void BM_ConvBackward(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    nn::Conv2d<float> conv(32, 32, k);
    Rng rng(1);
    conv.init(rng);
    const nn::Tensor x = random_input(1, 32, 64, 64, 2);
    const nn::Tensor dy = random_input(1, 32, 64, 64, 3);
    for (auto _ : state) {
        conv.zero_grad();
        benchmark::DoNotOptimize(conv.backward(x, dy));
    }
    const double macs = 2.0 * 32 * 32 * k * k * 64 * 64;
    state.counters["GMAC/s"] =
        benchmark::Counter(macs, benchmark::Counter::kIsIterationInvariantRate,
                           benchmark::Counter::kIs1000);
}
BENCHMARK(BM_ConvBackward)->Arg(3)->Arg(9)->Unit(benchmark::kMicrosecond);

static void BM_CednForward64(benchmark::State& state) {
    const Cedn net(ArchSpec::default_binary(), 1);
    const nn::Tensor x = random_input(1, 1, 64, 64, 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(net.forward(x));
    }
}
BENCHMARK(BM_CednForward64)->Unit(benchmark::kMillisecond);

static void BM_CednTrainStep64(benchmark::State& state) {
    Cedn net(ArchSpec::default_binary(), 1);
    const nn::Tensor x = random_input(4, 1, 64, 64, 5);
    nn::Tensor target(4, 1, 64, 64);
    nn::Adam<float> adam(1e-3);
    const auto refs = net.param_refs();
    for (auto _ : state) {
        net.zero_grad();
        const nn::Tensor y = net.forward_train(x);
        const auto loss = nn::bce_loss(y, target);
        net.backward(loss.grad);
        adam.step(refs);
    }
}
BENCHMARK(BM_CednTrainStep64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
