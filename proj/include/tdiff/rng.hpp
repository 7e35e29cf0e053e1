#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace tdiff {

// Deterministic random stream. std::mt19937_64 is fully specified by the
// standard, so the same seed yields the same integer stream on every
// platform. Floating-point conversions and the Gaussian transform are done
// here explicitly because std::normal_distribution is implementation
// defined.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    static std::string algorithm_id() { return "mt19937_64/boxmuller-v1"; }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        // rejection sampling keeps the draw unbiased
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller. Two uniform draws per sample; the sine
    // branch is discarded so the stream layout stays trivial to reason about.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    // Independent child stream derived from this rng's seed and a role tag.
    SeededRng fork(std::string_view role) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : role) {
            h ^= static_cast<std::uint8_t>(c);
            h *= 0x100000001b3ULL;
        }
        return SeededRng(splitmix(seed_ ^ h));
    }

    SeededRng fork(std::uint64_t salt) const {
        return SeededRng(splitmix(seed_ ^ (salt * 0x9e3779b97f4a7c15ULL)));
    }

    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace tdiff
