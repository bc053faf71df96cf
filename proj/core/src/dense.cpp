#include <microchar/dense.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

using nlohmann::json;

namespace microchar {

namespace {
constexpr int kAllowedFilters[5] = {1, 3, 5, 7, 9};
}

int snap_filter(double v) {
    v = std::clamp(v, 0.0, 10.0);
    int best = kAllowedFilters[0];
    double best_d = std::abs(v - kAllowedFilters[0]);
    for (int k : kAllowedFilters) {
        const double d = std::abs(v - k);
        if (d < best_d) { // strict: exact midpoints keep the lower member
            best_d = d;
            best = k;
        }
    }
    return best;
}

ArchSpec decode_arch(const std::vector<double>& genome, const ArchSpec& base) {
    const int expected = base.searched_filter_count();
    if (static_cast<int>(genome.size()) != expected) {
        throw InvalidArgument("decode_arch: genome length must equal searched conv count");
    }
    ArchSpec spec = base;
    const int n_enc = 2 * base.levels + 2;
    spec.enc_filters.resize(static_cast<std::size_t>(n_enc));
    spec.dec_filters.resize(static_cast<std::size_t>(base.levels));
    for (int i = 0; i < n_enc; ++i) {
        spec.enc_filters[static_cast<std::size_t>(i)] = snap_filter(genome[static_cast<std::size_t>(i)]);
    }
    for (int i = 0; i < base.levels; ++i) {
        spec.dec_filters[static_cast<std::size_t>(i)] =
            snap_filter(genome[static_cast<std::size_t>(n_enc + i)]);
    }
    spec.validate();
    return spec;
}

ArchSpec random_archspec(Rng& rng, const ArchSpec& base) {
    std::vector<double> genome(static_cast<std::size_t>(base.searched_filter_count()));
    for (double& g : genome) {
        g = static_cast<double>(kAllowedFilters[rng.next_below(5)]);
    }
    return decode_arch(genome, base);
}

DenseResult dense_search_with(const DenseConfig& cfg, const FitnessFn& fitness) {
    if (cfg.generations < 1 || cfg.lambda < 2) {
        throw InvalidArgument("dense_search: need generations >= 1 and lambda >= 2");
    }
    const int dim = cfg.base.searched_filter_count();
    CmaState state = cma_init(dim, std::vector<double>(static_cast<std::size_t>(dim), cfg.mean0),
                              cfg.sigma0, cfg.lambda);
    Rng ask_rng = Rng::stream(cfg.seed, "dense/ask");

    DenseResult result;
    result.best = cfg.base;
    result.best_fitness = std::numeric_limits<double>::infinity();

    // Candidates decoding to an already-scored architecture reuse that score;
    // the keyed entry is the first evaluation in (generation, index) order.
    std::map<std::vector<int>, double> cache;

    for (int gen = 0; gen < cfg.generations; ++gen) {
        const auto genomes = cma_ask(state, ask_rng);
        std::vector<double> fitnesses(genomes.size(), 1.0);
        for (int idx = 0; idx < static_cast<int>(genomes.size()); ++idx) {
            const auto& genome = genomes[static_cast<std::size_t>(idx)];
            DenseRecord rec;
            rec.gen = gen;
            rec.idx = idx;
            rec.genome = genome;
            rec.spec = decode_arch(genome, cfg.base);

            const auto key = rec.spec.all_filters();
            const auto t0 = std::chrono::steady_clock::now();
            double f;
            if (const auto it = cache.find(key); it != cache.end()) {
                f = it->second;
            } else {
                try {
                    f = fitness(rec.spec, gen, idx);
                } catch (const Error&) {
                    f = 1.0;
                }
                if (!std::isfinite(f)) f = 1.0;
                cache.emplace(key, f);
            }
            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rec.fitness = f;
            fitnesses[static_cast<std::size_t>(idx)] = f;
            if (f < result.best_fitness) {
                result.best_fitness = f;
                result.best = rec.spec;
            }
            result.history.push_back(std::move(rec));
        }
        cma_tell(state, genomes, fitnesses);
    }
    return result;
}

double proxy_fitness(const ArchSpec& spec, const RgbDataset& data, const DenseConfig& cfg,
                     int gen, int idx) {
    if (data.train.empty()) throw EmptyDataset("proxy_fitness: empty proxy training set");
    Rng seed_rng = Rng::stream(cfg.seed, "dense/eval",
                               static_cast<std::uint64_t>(gen) * 1000003ULL +
                                   static_cast<std::uint64_t>(idx));
    const std::uint64_t eval_seed = seed_rng.next_u64();

    Cedn net(spec, eval_seed);
    TrainConfig tc;
    tc.epochs = cfg.proxy_epochs;
    tc.lr = cfg.proxy_lr;
    tc.batch = cfg.proxy_batch;
    tc.seed = eval_seed;
    train_cedn(net, data.train, {}, tc, LossKind::Mse);

    if (data.val.empty()) throw EmptyDataset("proxy_fitness: empty proxy validation set");
    double acc_sum = 0.0;
    for (const CednSample& s : data.val) {
        const nn::Tensor y = net.forward(s.input);
        acc_sum += rgb_accuracy(tensor_to_rgb(y), tensor_to_rgb(s.target));
    }
    const double acc = acc_sum / static_cast<double>(data.val.size());
    return 1.0 - acc / 100.0;
}

DenseResult dense_search(const DenseConfig& cfg, const RgbDataset& data) {
    if (data.train.empty() || data.val.empty()) {
        throw EmptyDataset("dense_search: proxy dataset must have train and val samples");
    }
    return dense_search_with(cfg, [&](const ArchSpec& spec, int gen, int idx) {
        return proxy_fitness(spec, data, cfg, gen, idx);
    });
}

std::string dense_history_jsonl(const DenseResult& result) {
    std::ostringstream out;
    for (const DenseRecord& rec : result.history) {
        const json j{{"gen", rec.gen},
                     {"idx", rec.idx},
                     {"genome", rec.genome},
                     {"filters", rec.spec.all_filters()},
                     {"fitness", rec.fitness},
                     {"wall_time", rec.wall_seconds}};
        out << j.dump() << "\n";
    }
    return out.str();
}

} // namespace microchar
