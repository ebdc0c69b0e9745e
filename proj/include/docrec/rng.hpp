#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace docrec {

/// SplitMix64 in counter form: the i-th output is mix(seed + (i + 1) * gamma).
///
/// Every draw is defined purely in terms of 64-bit integer arithmetic, so a
/// (seed, counter) pair produces the same stream on every platform and in any
/// language that reimplements the three lines of `mix`. The standard library
/// distributions are avoided on purpose because their algorithms are
/// implementation-defined.
class CounterRng {
public:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

    explicit CounterRng(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() {
        ++counter_;
        return mix(seed_ + counter_ * kGamma);
    }

    /// Uniform integer in [0, bound) by rejection; bound must be positive.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % bound;
    }

    /// Uniform integer in [lo, hi] inclusive.
    int range(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1))); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    /// Fisher-Yates permutation of [0, n).
    std::vector<int> permutation(int n) {
        std::vector<int> perm(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
            std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
        }
        return perm;
    }

    /// Standard normal via Box-Muller on two uniforms.
    double normal();

    /// Derive an independent stream, e.g. one per sample or per purpose.
    CounterRng fork(std::uint64_t tag) const { return CounterRng(mix(seed_ ^ mix(tag + kGamma)), 0); }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

}  // namespace docrec
