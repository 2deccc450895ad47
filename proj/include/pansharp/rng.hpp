#pragma once

#include <cmath>
#include <cstdint>

namespace pansharp {

// Splitmix64 generator. Chosen over std::mt19937_64 + <random> distributions
// because the standard distributions are implementation-defined, and dataset
// synthesis, patch sampling and weight init must be bit-reproducible across
// compilers. keyed() derives an independent stream per (seed, key) pair so
// sample i is stable no matter how many draws preceded it.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // decorrelate trivially related seeds
        next_u64();
        next_u64();
    }

    static Rng keyed(std::uint64_t seed, std::uint64_t key) {
        Rng r(seed);
        r.state_ ^= mix(key + 0x9E3779B97F4A7C15ULL);
        r.next_u64();
        return r;
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::uint32_t below(std::uint32_t n) {
        return static_cast<std::uint32_t>((next_u64() >> 32) * n >> 32);
    }

    // standard normal via Box-Muller
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace pansharp
