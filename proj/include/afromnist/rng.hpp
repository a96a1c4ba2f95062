#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace afromnist {

// splitmix64 finalizer; full 64-bit avalanche, bijective.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Derives an independent stream seed from a master seed and a key path,
// e.g. derive_stream(master, {split_tag, label, index}). Distinct key words
// yield distinct seeds at any fixed position (mix64 is bijective).
constexpr std::uint64_t derive_stream(std::uint64_t master,
                                      std::initializer_list<std::uint64_t> words) {
    std::uint64_t h = mix64(master);
    for (std::uint64_t w : words) h = mix64(h ^ mix64(w));
    return h;
}

// Key-path tags (arbitrary fixed constants, one per purpose).
namespace stream_tag {
inline constexpr std::uint64_t train = 0;
inline constexpr std::uint64_t test = 1;
inline constexpr std::uint64_t shuffle = 0x73687566666C6531ULL;
inline constexpr std::uint64_t init = 0x696E697477656967ULL;
inline constexpr std::uint64_t epoch = 0x65706F6368737566ULL;
}  // namespace stream_tag

// xoshiro256++ (Blackman & Vigna). Small shift-register state, seeded by
// splitmix64 expansion so a zero seed is safe.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) {
            s += 0x9E3779B97F4A7C15ULL;
            std::uint64_t z = s;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            word = z ^ (z >> 31);
        }
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0,1), 53-bit resolution
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform in [-1,1]
    double uniform_signed() { return 2.0 * uniform() - 1.0; }

    // standard normal via Box-Muller; two uniforms per draw, positionally
    // deterministic
    double normal() {
        const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;  // (0,1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // uniform integer in [0,bound) (Lemire multiply-shift)
    std::uint64_t bounded(std::uint64_t bound) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * bound) >> 64);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t state_[4];
};

}  // namespace afromnist
