// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tli {

/// SplitMix64 generator. Every derived draw (uniform, Gaussian, shuffle) is
/// implemented here rather than through <random> distributions so that a seed
/// produces the same sequence with any standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_{seed} {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in [0, n). n must be > 0.
    std::size_t below(std::size_t n);

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Fisher-Yates, index-descending.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }
    template <typename T>
    void shuffle(std::vector<T>& items) {
        shuffle(std::span<T>{items});
    }

    /// Independent stream derived from this generator's next output.
    Rng fork();

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

} // namespace tli
