#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, scenario, particle, purpose, index), so any substream can be
// regenerated on demand and two runs that ask for the same key see the
// same numbers regardless of step size, control or thread schedule.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mfcpn {

enum class Purpose : std::uint64_t {
    poisson = 1,
    brownian = 2,
    bridge = 3,
    initial = 4,
    control = 5,
    sampling = 6,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash_combine(std::uint64_t key, std::uint64_t v) {
    return splitmix64(key ^ splitmix64(v + 0x632be59bd9b4e019ULL));
}

/// Key of an independent substream.
inline constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t scenario, std::uint64_t particle,
                                          Purpose purpose) {
    return hash_combine(hash_combine(hash_combine(splitmix64(seed), scenario), particle),
                        static_cast<std::uint64_t>(purpose));
}

/// Uniform on (0, 1) with 53 random bits, never 0.
inline double uniform_at(std::uint64_t key, std::uint64_t index) {
    const std::uint64_t r = hash_combine(key, index);
    return (static_cast<double>(r >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal by Box-Muller on the uniforms at 2 index and 2 index + 1.
inline double normal_at(std::uint64_t key, std::uint64_t index) {
    const double u1 = uniform_at(key, 2 * index);
    const double u2 = uniform_at(key, 2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Sequential view of one substream.
class Stream {
public:
    explicit Stream(std::uint64_t key) : key_(key) {}
    Stream(std::uint64_t seed, std::uint64_t scenario, std::uint64_t particle, Purpose purpose)
        : key_(stream_key(seed, scenario, particle, purpose)) {}

    double uniform() { return uniform_at(key_, counter_++); }
    double normal() { return normal_at(key_, counter_++); }
    double exponential(double rate) { return -std::log(uniform()) / rate; }
    std::uint64_t key() const noexcept { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace mfcpn
