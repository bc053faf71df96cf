#pragma once

#include <cstdint>
#include <string_view>

namespace microchar {

/// Counter-based pseudo-random generator (SplitMix64 output function over an
/// incrementing counter). Fully portable: the same (seed, purpose, index)
/// produces the same stream on every platform, which is what makes dataset
/// generation reproducible across runs and thread counts. Streams derived via
/// stream() are independent for distinct (purpose, index) pairs.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Derive an independent stream keyed by (seed, purpose, index).
    static Rng stream(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0);

    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double();

    /// Uniform double in [lo, hi).
    double next_range(double lo, double hi);

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t next_below(std::uint64_t bound);

    /// Standard normal via Box-Muller (second value cached).
    double next_normal();

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace microchar
