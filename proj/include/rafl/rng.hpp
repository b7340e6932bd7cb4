#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "rafl/errors.hpp"

namespace rafl {

using Rng = std::mt19937_64;

// Every random stream in the simulator is keyed through this derivation
// tree as (master seed, domain, a, b). Streams are therefore independent
// of registry order and of each other: minting a new client or reordering
// work never perturbs anyone else's draws.
enum class SeedDomain : std::uint64_t {
    dataset_gen = 1,
    test_split = 2,
    val_split = 3,
    public_split = 4,
    public_shift = 5,
    partition = 6,
    supernet_init = 7,
    supernet_train = 8,
    global_init = 9,
    client_init = 10,
    client_budget = 11,
    local_update = 12,
    selection = 13,
    churn = 14,
    distill = 15,
    eval_panel = 16,
};

// splitmix64 finalizer; good avalanche, cheap.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, SeedDomain domain,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = mix64(master);
    h = mix64(h ^ static_cast<std::uint64_t>(domain));
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    return h;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// The distributions below are written out by hand because the standard
// library only pins down the engine, not the distributions; libstdc++ and
// libc++ would otherwise produce different runs from the same seed.

// Uniform integer in [0, n) by rejection (no modulo bias).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    if (n == 0) throw UsageError("uniform_index: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return x % n;
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_real(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_real(rng);
}

// Standard normal via Box-Muller (cosine branch only, one value per call).
inline double normal_sample(Rng& rng) {
    const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform_real(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Gamma(shape, 1) via Marsaglia-Tsang squeeze, with the usual boost for
// shape < 1.
inline double gamma_sample(Rng& rng, double shape) {
    if (shape <= 0.0) throw UsageError("gamma_sample: shape must be positive");
    if (shape < 1.0) {
        double u = uniform_real(rng);
        while (u <= 0.0) u = uniform_real(rng);
        return gamma_sample(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = normal_sample(rng);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        double u = uniform_real(rng);
        while (u <= 0.0) u = uniform_real(rng);
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

// Symmetric Dirichlet(alpha) over k categories via normalized gammas.
inline std::vector<double> dirichlet_sample(Rng& rng, double alpha, std::size_t k) {
    std::vector<double> p(k);
    double sum = 0.0;
    for (auto& x : p) {
        x = gamma_sample(rng, alpha);
        sum += x;
    }
    if (sum <= 0.0) {
        // All-zero draws are possible for tiny alpha at double precision;
        // fall back to a uniform vector rather than dividing by zero.
        for (auto& x : p) x = 1.0 / static_cast<double>(k);
        return p;
    }
    for (auto& x : p) x /= sum;
    return p;
}

// Fisher-Yates.
template <class T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[uniform_index(rng, i)]);
    }
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

// Uniform k-subset of [0, n) via partial Fisher-Yates; draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
    if (k > n) throw UsageError("sample_without_replacement: k exceeds population");
    auto idx = iota_indices(n);
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace rafl
