#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace fedchain {

/// Deterministic pseudo-random stream built on splitmix64. Every draw is a
/// pure function of (seed, draw index), so results are identical across
/// platforms and runs. Distribution transforms are spelled out here instead
/// of using <random> distributions, whose output is implementation-defined.
class DeterministicRng {
public:
    explicit DeterministicRng(std::uint64_t seed) : state_(seed) {}

    /// Independent substream keyed by a counter; drawing from one substream
    /// never perturbs another.
    static DeterministicRng keyed(std::uint64_t seed, std::uint64_t key) {
        return DeterministicRng(mix(seed ^ mix(key)));
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    /// Uniform integer in [lo, hi] inclusive.
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
        std::uint64_t span = hi - lo + 1;
        return lo + next_u64() % span;
    }

    /// Box-Muller; two uniforms per draw, no cached state.
    double gaussian(double mean, double sd) {
        double u1 = next_unit();
        double u2 = next_unit();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        return mean + sd * z;
    }

    /// Knuth's product method; fine for the small lambdas used here.
    std::uint64_t poisson(double lambda) {
        double limit = std::exp(-lambda);
        double product = next_unit();
        std::uint64_t count = 0;
        while (product > limit) {
            ++count;
            product *= next_unit();
        }
        return count;
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        if (items.size() < 2) return;
        for (std::size_t i = items.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(0, i));
            std::swap(items[i], items[j]);
        }
    }

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

private:
    std::uint64_t state_;
};

}  // namespace fedchain
