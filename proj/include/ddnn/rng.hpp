#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace ddnn {

/**
 * Deterministic random number generator (xoshiro256**), seeded through
 * splitmix64. All randomness in the project flows through instances of this
 * class so that a run is reproducible bit-for-bit from a single seed,
 * independent of platform or standard library version.
 */
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    /// Uniform double in [0, 1).
    double uniform();

    /// Uniform float in [lo, hi).
    float uniform(float lo, float hi);

    /// Standard normal via Box-Muller (cached second draw).
    float normal();

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    int64_t index(int64_t n);

    /// Bernoulli draw with success probability p.
    bool bernoulli(double p);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates, fixed traversal order.
        for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
            int64_t j = index(i + 1);
            std::swap(v[i], v[static_cast<size_t>(j)]);
        }
    }

    /// Derives an independent stream seed from (seed, tag). Used to give each
    /// consumer (init, shuffle, data, split, ...) its own stream.
    static uint64_t derive(uint64_t seed, std::string_view tag);

private:
    uint64_t state_[4];
    bool has_cached_normal_ = false;
    float cached_normal_ = 0.0f;
};

} // namespace ddnn
