// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

namespace csifb {

// Deterministic PRNG used wherever seeds matter. splitmix64 core, so streams
// are reproducible across platforms and standard-library versions.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    // One splitmix64 mixing round as a stateless hash.
    static uint64_t hash64(uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // Counter-based seed splitting: child k of master seed s is
    // hash64(s XOR hash64(k + 1)). Used for per-sample dataset seeds.
    static uint64_t split(uint64_t master, uint64_t child) {
        return hash64(master ^ hash64(child + 1));
    }

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Modulo bias is negligible for the n used here.
    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; always consumes exactly two uniforms.
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Exponential with the given mean (inverse CDF).
    double exponential(double mean) {
        double u;
        do {
            u = uniform();
        } while (u >= 1.0);
        return -mean * std::log1p(-u);
    }

    // Zero-mean Laplace with the given standard deviation (scale = stddev/sqrt(2)).
    double laplace(double stddev) {
        const double b = stddev / 1.4142135623730951;
        const double u = uniform() - 0.5;
        const double sign = (u < 0.0) ? -1.0 : 1.0;
        return -b * sign * std::log1p(-2.0 * std::fabs(u));
    }

  private:
    uint64_t state_;
};

// FNV-1a 64-bit, used for config/content hashes in run manifests.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace csifb
