#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace jscc {

// splitmix64 finalizer; used to derive independent seeds from a master seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_mix(std::uint64_t seed, std::uint64_t v) {
    return splitmix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

constexpr std::uint64_t hash_str(std::string_view s) {
    // FNV-1a, 64-bit.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic stream derivation: identical (base, tag, indices) always
// yields the same seed, distinct tags/indices yield independent streams.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                    std::uint64_t i0 = 0, std::uint64_t i1 = 0,
                                    std::uint64_t i2 = 0) {
    std::uint64_t h = hash_mix(base, hash_str(tag));
    h = hash_mix(h, i0);
    h = hash_mix(h, i1);
    h = hash_mix(h, i2);
    return h;
}

// Seeded generator with hand-rolled distributions. std::mt19937_64 output is
// pinned by the standard; the uniform/gaussian constructions below avoid the
// implementation-defined std::*_distribution classes so that streams are
// reproducible bitwise from the seed alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1]; safe as a log() argument.
    double uniform_open0() {
        return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller. Stateless per call (two uniforms in,
    // one variate out) so the stream position is a pure function of the call
    // count.
    double gaussian() {
        const double u1 = uniform_open0();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection-free modulo bias is negligible for our n << 2^64 uses,
        // but keep it exact anyway.
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x = gen_();
        while (x >= limit) x = gen_();
        return x % n;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace jscc
