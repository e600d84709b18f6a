#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace armor {

enum class errc {
    invalid_argument,
    io,
    parse,
    runtime,
};

struct error : std::runtime_error {
    errc code;
    error(errc c, const std::string & msg) : std::runtime_error(msg), code(c) {}
};

[[noreturn]] inline void fail(errc c, const std::string & msg) { throw error(c, msg); }

// splitmix64 step, used for seed-stream derivation
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// derive an independent stream id from a base seed and entity indices
inline uint64_t seed_stream(uint64_t seed, std::initializer_list<uint64_t> ids) {
    uint64_t h = mix64(seed ^ 0xa0761d6478bd642full);
    for (uint64_t v : ids) {
        h = mix64(h ^ mix64(v + 0x8bb84b93962eacc9ull));
    }
    return h;
}

// mt19937_64 engine (bit-exact across platforms per the standard) with
// hand-rolled transforms: std::*_distribution output is not portable.
struct rng {
    std::mt19937_64 eng;

    explicit rng(uint64_t seed = 0) : eng(seed) {}

    uint64_t bits() { return eng(); }

    // uniform in [0, 1): 53 mantissa bits
    double uniform() { return (eng() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n), n > 0, via rejection-free modulo of 64 bits
    // (bias < 2^-53 for the n used here; acceptable and deterministic)
    uint64_t below(uint64_t n) { return eng() % n; }

    // standard normal via Box-Muller (both values used, cached)
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_      = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Fisher-Yates shuffle, deterministic given the engine state
    template <typename T> void shuffle(std::vector<T> & v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = (size_t) below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    bool   have_spare_ = false;
    double spare_      = 0.0;
};

// FNV-1a 64-bit, used for content checksums in reports
inline uint64_t fnv1a64(const void * data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const uint8_t * p = (const uint8_t *) data;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long) v);
    return std::string(buf);
}

}  // namespace armor
