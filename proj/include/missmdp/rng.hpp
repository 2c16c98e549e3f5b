#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace missmdp {

/**
 * Counter-based seed derivation.
 *
 * Every stochastic component draws from an engine seeded by mixing a master
 * seed with a fixed tuple of integer labels (purpose, cell indices, ...).
 * Streams are therefore stable under reordering of work and under any
 * worker-pool size, which is what makes reports byte-reproducible.
 */
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> labels) {
    std::uint64_t h = mix_seed(master);
    for (std::uint64_t v : labels) h = mix_seed(h ^ mix_seed(v));
    return h;
}

inline std::mt19937_64 derive_rng(std::uint64_t master, std::initializer_list<std::uint64_t> labels) {
    return std::mt19937_64(derive_seed(master, labels));
}

/** Uniform draw in [0,1) with a fixed, implementation-independent mapping. */
inline double next_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/** Index into an explicit probability vector by CDF walk; the last index absorbs rounding. */
inline std::size_t sample_index(const std::vector<double>& probs, std::mt19937_64& rng) {
    double u = next_unit(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.empty() ? 0 : probs.size() - 1;
}

}  // namespace missmdp
