#pragma once

#include <cstdint>
#include <random>

namespace quadrom {

/// Deterministic random source. All randomness in the library flows through
/// this wrapper so that results depend only on the seed, not on
/// implementation-defined distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        // Rejection sampling keeps the draw unbiased.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Well-mixed seed for an independent stream identified by a tag.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t tag) {
        return splitmix64(seed ^ splitmix64(tag));
    }

    /// Independent stream derived from a base seed and a stream tag.
    static Rng derive(std::uint64_t seed, std::uint64_t tag) { return Rng(mix(seed, tag)); }

private:
    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
};

}  // namespace quadrom
