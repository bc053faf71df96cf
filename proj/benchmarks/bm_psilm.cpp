#include <benchmark/benchmark.h>

#include <microchar/psilm.hpp>
#include <microchar/synth.hpp>

using namespace microchar;

namespace {

SynthImage grains_256(int seeds) {
    GrainSpec spec;
    spec.seed_count = seeds;
    spec.noise_sigma = 3.0;
    return gen_grains(spec, 256, 777);
}

} // namespace

static void BM_GbEdgeMask256(benchmark::State& state) {
    const SynthImage sample = grains_256(20);
    for (auto _ : state) {
        benchmark::DoNotOptimize(gb_edge_mask(sample.image));
    }
}
BENCHMARK(BM_GbEdgeMask256)->Unit(benchmark::kMillisecond);

static void BM_SampleIntercepts256(benchmark::State& state) {
    const SynthImage sample = grains_256(20);
    const BinaryMask edges = gb_edge_mask(sample.image);
    PsilmConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample_intercepts(edges, cfg));
    }
}
BENCHMARK(BM_SampleIntercepts256)->Unit(benchmark::kMillisecond);

static void BM_RgbSegmentation256(benchmark::State& state) {
    const SynthImage sample = grains_256(static_cast<int>(state.range(0)));
    PsilmConfig cfg;
    cfg.colormap_max = 64.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(rgb_segmentation(sample.image, cfg));
    }
}
BENCHMARK(BM_RgbSegmentation256)->Arg(5)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
