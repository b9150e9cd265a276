#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace handbio {

// Deterministic 64-bit generator (splitmix64). We roll our own instead of
// using <random> distributions because their output is implementation
// defined, and run artifacts must be reproducible byte-for-byte.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    uint64_t uniform_int(uint64_t n) { return next() % n; }

    // Standard normal via Box-Muller (no caching, two draws per call).
    double normal() {
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent substream derived from this generator's seed and a tag.
    // Used to give every (epoch, batch, sample) its own dropout stream so
    // results do not depend on thread scheduling.
    Rng fork(uint64_t tag) const {
        Rng r(state_ ^ (0x5851f42d4c957f2dULL * (tag + 1)));
        r.next();
        return r;
    }

private:
    uint64_t state_;
};

}  // namespace handbio
