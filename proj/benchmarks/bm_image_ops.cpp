#include <benchmark/benchmark.h>

#include <microchar/image_ops.hpp>
#include <microchar/synth.hpp>
#include <microchar/wcbd.hpp>

using namespace microchar;

namespace {

SynthImage particles_256() {
    ParticleSpec spec;
    spec.count = 40;
    spec.allow_overlap = true;
    spec.noise_sigma = 8.0;
    return gen_particles(spec, 256, 12345);
}

} // namespace

static void BM_DistanceTransform256(benchmark::State& state) {
    const SynthImage sample = particles_256();
    for (auto _ : state) {
        benchmark::DoNotOptimize(cityblock_distance_transform(sample.truth.mask));
    }
}
BENCHMARK(BM_DistanceTransform256)->Unit(benchmark::kMicrosecond);

static void BM_Watershed256(benchmark::State& state) {
    const SynthImage sample = particles_256();
    const DistanceMap dm = cityblock_distance_transform(sample.truth.mask);
    const LabelMap markers = local_maxima(dm, 5);
    const auto elevation = negate(dm);
    for (auto _ : state) {
        benchmark::DoNotOptimize(watershed(elevation, markers, sample.truth.mask));
    }
}
BENCHMARK(BM_Watershed256)->Unit(benchmark::kMicrosecond);

static void BM_Sobel256(benchmark::State& state) {
    const SynthImage sample = particles_256();
    for (auto _ : state) {
        benchmark::DoNotOptimize(sobel_magnitude(sample.image));
    }
}
BENCHMARK(BM_Sobel256)->Unit(benchmark::kMicrosecond);

static void BM_Otsu256(benchmark::State& state) {
    const SynthImage sample = particles_256();
    for (auto _ : state) {
        benchmark::DoNotOptimize(threshold_otsu(sample.image, Polarity::Bright));
    }
}
BENCHMARK(BM_Otsu256)->Unit(benchmark::kMicrosecond);

static void BM_WcbdSegment256(benchmark::State& state) {
    const SynthImage sample = particles_256();
    for (auto _ : state) {
        benchmark::DoNotOptimize(wcbd_segment(sample.image, Polarity::Bright));
    }
}
BENCHMARK(BM_WcbdSegment256)->Unit(benchmark::kMicrosecond);

static void BM_SplitOverlaps256(benchmark::State& state) {
    const SynthImage sample = particles_256();
    for (auto _ : state) {
        benchmark::DoNotOptimize(split_overlaps(sample.truth.mask, 5));
    }
}
BENCHMARK(BM_SplitOverlaps256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
