#pragma once

#include <cmath>
#include <cstdint>

namespace rfscope {

// Deterministic RNG with a fixed algorithm (splitmix64). std:: distributions
// are implementation-defined, so every draw here is spelled out explicitly;
// the same seed gives the same stream on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n > 0; rejection keeps it unbiased
    uint64_t uniform_int(uint64_t n) {
        uint64_t threshold = (0ull - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    int uniform_index(int n) { return int(uniform_int(uint64_t(n))); }

    bool bernoulli(double p) { return uniform() < p; }

    // Marsaglia polar method; caches the second deviate
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // independent child stream, for per-image / per-layer decorrelation
    Rng split(uint64_t salt) {
        uint64_t s = state_ ^ (0x9e3779b97f4a7c15ull * (salt + 0x632be59bd9b4e019ull));
        Rng child(s);
        child.next_u64();
        return child;
    }

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace rfscope
