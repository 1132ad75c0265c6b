#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace siltwin {

// Deterministic random source. std::mt19937_64 output is fixed by the
// standard, but the standard distributions are not, so the samplers here
// are written out explicitly to keep streams byte-identical across
// platforms and library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t bits() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, bound). Multiply-shift; the modulo bias at
    // 64 bits is below 2^-53 for any bound used here.
    std::uint64_t below(std::uint64_t bound) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(gen_()) * bound) >> 64);
    }

    // Standard normal via Box-Muller. Always consumes two uniforms; no
    // cached spare, so the stream position is predictable.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Exponential with the given rate.
    double exponential(double rate) {
        double u = 1.0 - uniform();
        return -std::log(u) / rate;
    }

private:
    std::mt19937_64 gen_;
};

// splitmix64 finalizer; used to derive independent per-item seeds from a
// master seed so parallel and serial generation agree.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace siltwin
