#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "topoae/errors.hpp"

namespace topoae {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Deterministic per-trial seed: identical on every platform, so parallel and
/// serial experiment schedules draw the same streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t s = master ^ (index * 0xd1b54a32d192ed03ull + 0x2545f4914f6cdd1dull);
    return splitmix64_next(s);
}

/// xoshiro256** with hand-rolled distributions. The standard <random>
/// distributions are implementation-defined, which would break the
/// bit-reproducibility contract of seeded runs.
class rng {
public:
    explicit rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : s_) word = splitmix64_next(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (lo > hi) throw validation_error("uniform_int: empty range");
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        // Rejection sampling keeps the distribution exact.
        const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % span;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return lo + static_cast<std::int64_t>(x % span);
    }

    /// Standard normal via Box-Muller (second value discarded).
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Fisher-Yates permutation of 0..n-1.
    std::vector<int> permutation(int n) {
        std::vector<int> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = n - 1; i > 0; --i) {
            const auto j = static_cast<int>(uniform_int(0, i));
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        return idx;
    }

    /// k distinct indices from 0..n-1 (partial Fisher-Yates), in draw order.
    std::vector<int> sample_without_replacement(int n, int k) {
        if (k < 0 || k > n) throw validation_error("sample_without_replacement: k out of range");
        std::vector<int> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = 0; i < k; ++i) {
            const auto j = static_cast<int>(uniform_int(i, n - 1));
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        idx.resize(static_cast<std::size_t>(k));
        return idx;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4];
};

}  // namespace topoae
