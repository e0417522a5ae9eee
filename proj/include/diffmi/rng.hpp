#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace diffmi {

/// SplitMix64 step; used for seed derivation so that substreams are
/// decorrelated from the master seed and from each other.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derive the seed of substream `stream` from a master seed. Pure, so a
/// consumer can extend the number of substreams later without disturbing
/// the ones that already exist.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream + 1));
}

/// Deterministic random source. Distribution code is hand-rolled on top of
/// mt19937_64 rather than using <random> distributions, whose output is
/// implementation-defined; identical seeds must give identical streams.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Multiply-shift bounding, n <= 2^63.
    std::int64_t uniform_int(std::int64_t n) {
        using u128 = unsigned __int128;
        return static_cast<std::int64_t>(
            (static_cast<u128>(gen_()) * static_cast<u128>(n)) >> 64);
    }

    /// Standard normal via Box-Muller. Two uniforms per draw, no cached
    /// spare, so the stream position is a simple function of call count.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace diffmi
