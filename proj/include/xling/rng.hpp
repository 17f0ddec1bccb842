// Seeded random number generation with named sub-stream derivation.
//
// All randomness in the toolkit flows from a single master seed through
// derive_seed(master, "stream-name"), so individual components (init, data
// order, synthetic sampling) can be reproduced in isolation.

#ifndef XLING_RNG_HPP
#define XLING_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace xling {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_bytes(std::string_view s) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic sub-seed for a named stream of the master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
    return splitmix64(master ^ (hash_bytes(stream) * 0x9e3779b97f4a7c15ULL));
}

// mt19937_64 wrapper producing platform-independent doubles. std::
// distributions are implementation-defined, so uniform doubles are built
// from the raw 64-bit draws directly.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // uniform integer in [0, n), rejection sampled
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace xling

#endif  // XLING_RNG_HPP
