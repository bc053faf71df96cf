#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <microchar/cma.hpp>
#include <microchar/models.hpp>

namespace microchar {

/// Clamp to [0,10], then snap to the nearest of {1,3,5,7,9}; exact midpoints
/// snap downward. Idempotent on already-valid filter values.
int snap_filter(double v);

/// Genome -> architecture: one coordinate per searched conv (encoder pairs,
/// bottleneck pair, decoder convs), levels/channels/output taken from `base`.
ArchSpec decode_arch(const std::vector<double>& genome, const ArchSpec& base);

/// Uniformly random filter assignment over the allowed set.
ArchSpec random_archspec(Rng& rng, const ArchSpec& base);

struct DenseConfig {
    int generations = 8;
    int lambda = 6;
    int proxy_epochs = 1;
    double proxy_lr = 2e-3;
    int proxy_batch = 4;
    std::uint64_t seed = 1;
    double mean0 = 5.0;  ///< genome coordinates start mid-range
    double sigma0 = 2.0;
    ArchSpec base = ArchSpec::default_rgb();
};

struct DenseRecord {
    int gen = 0;
    int idx = 0;
    std::vector<double> genome;
    ArchSpec spec;
    double fitness = 1.0;
    double wall_seconds = 0.0;
};

struct DenseResult {
    ArchSpec best;
    double best_fitness = 1.0;
    std::vector<DenseRecord> history; ///< generations x lambda records
};

/// Proxy dataset for candidate evaluation (grayscale inputs, RGB targets).
struct RgbDataset {
    std::vector<CednSample> train;
    std::vector<CednSample> val;
};

using FitnessFn = std::function<double(const ArchSpec& spec, int gen, int idx)>;

/// CMA-ES loop over genomes with an arbitrary fitness (lower is better).
/// Candidates decoding to an architecture already evaluated reuse the cached
/// fitness instead of re-evaluating. Non-finite fitness scores 1.0.
DenseResult dense_search_with(const DenseConfig& cfg, const FitnessFn& fitness);

/// Fitness of one candidate: train a fresh CEDN for cfg.proxy_epochs on
/// data.train (init/shuffle seed derived from (cfg.seed, gen, idx)), then
/// return 1 - mean rgb_accuracy(val)/100. Failed or non-finite training
/// scores 1.0.
double proxy_fitness(const ArchSpec& spec, const RgbDataset& data, const DenseConfig& cfg,
                     int gen, int idx);

/// The search loop wired to proxy_fitness. Throws EmptyDataset when the proxy
/// training set is empty.
DenseResult dense_search(const DenseConfig& cfg, const RgbDataset& data);

/// History serialization, one JSON object per line:
/// {gen, idx, genome, filters, fitness, wall_time}.
std::string dense_history_jsonl(const DenseResult& result);

} // namespace microchar
