#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace peghole {

// Deterministic, platform-independent RNG. std::uniform_*_distribution is
// implementation-defined, so all sampling goes through this instead.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {
        // splitmix64 warm-up so small seeds diverge immediately
        next_u64();
        next_u64();
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    Rng fork() { return Rng(next_u64()); }

private:
    uint64_t state_;
};

// FNV-1a; used to derive stable sub-seeds from string tags.
inline uint64_t hash_tag(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t sub_seed(uint64_t master, std::string_view tag, uint64_t index = 0) {
    uint64_t h = hash_tag(tag) ^ (master * 0x9e3779b97f4a7c15ull);
    h ^= (index + 1) * 0xbf58476d1ce4e5b9ull;
    return Rng(h).next_u64();
}

}  // namespace peghole
