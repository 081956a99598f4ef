#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "proxyfed/linalg.hpp"

namespace proxyfed {

// Seed derivation. Every random stream in the simulator is keyed by mixing
// the master seed with fixed tags (and round/client ids), so results never
// depend on call order across threads.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(a) + 0x9e3779b97f4a7c15ull * splitmix64(b));
}

template <class... Rest>
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
    return mix_seed(mix_seed(a, b), static_cast<std::uint64_t>(rest)...);
}

// Deterministic RNG. The normal/gamma samplers are written out by hand
// because the std::distributions are implementation-defined (and
// normal_distribution caches a spare value), which would tie outputs to a
// particular standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1]; used where log() or pow() must not see zero.
    double uniform_pos() { return 1.0 - uniform(); }

    // Standard normal via Box-Muller (cosine branch only — one draw per
    // call, no hidden spare).
    double normal() {
        double u1 = uniform_pos();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Unbiased integer in [0, n) by rejection.
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        std::uint64_t un = static_cast<std::uint64_t>(n);
        std::uint64_t rem = (UINT64_MAX % un + 1) % un;  // 2^64 mod n
        std::uint64_t bound = UINT64_MAX - rem;
        std::uint64_t v;
        do {
            v = gen_();
        } while (v > bound);
        return static_cast<int>(v % un);
    }

    // Gamma(shape, 1) via Marsaglia-Tsang, with the standard boost for
    // shape < 1.
    double gamma(double shape) {
        if (shape <= 0.0) throw std::invalid_argument("gamma: shape must be positive");
        if (shape < 1.0) return gamma(shape + 1.0) * std::pow(uniform_pos(), 1.0 / shape);
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double t = 1.0 + c * x;
            if (t <= 0.0) continue;
            double v = t * t * t;
            double u = uniform_pos();
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // Symmetric Dirichlet(alpha) of dimension k on the simplex.
    Vec dirichlet(double alpha, int k) {
        if (k <= 0) throw std::invalid_argument("dirichlet: dimension must be positive");
        Vec p(k);
        double sum = 0.0;
        for (int i = 0; i < k; ++i) {
            p[i] = gamma(alpha);
            sum += p[i];
        }
        if (sum <= 0.0) {  // all-underflow corner; fall back to uniform
            for (double& v : p) v = 1.0 / k;
            return p;
        }
        for (double& v : p) v /= sum;
        return p;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[i], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace proxyfed
