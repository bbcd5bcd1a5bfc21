#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include "microtrap/constants.hpp"

namespace microtrap {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Key of the per-atom random stream derived from the run seed.
inline constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64_mix(splitmix64_mix(seed ^ 0x6a09e667f3bcc909ULL) + stream * 0x9e3779b97f4a7c15ULL);
}

/// Counter-based generator: draw n of a stream is a pure function of (key, n),
/// so any atom's sequence can be replayed independently of scheduling.
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    constexpr CounterRng(std::uint64_t key, std::uint64_t counter = 0) : key_(key), counter_(counter) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() { return splitmix64_mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    [[nodiscard]] std::uint64_t counter() const { return counter_; }
    [[nodiscard]] std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

/// Unit vector uniformly distributed on the sphere.
inline Vec3 isotropic_direction(CounterRng& rng) {
    const double cos_theta = 2.0 * rng.uniform() - 1.0;
    const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
    const double phi = constants::two_pi * rng.uniform();
    return {sin_theta * std::cos(phi), sin_theta * std::sin(phi), cos_theta};
}

/// Poisson draw specialised for the small per-step means of the heating loop;
/// `exp_neg_mean` is exp(-mean), hoisted out of the inner loop by the caller.
inline unsigned poisson_draw(CounterRng& rng, double mean, double exp_neg_mean) {
    if (mean <= 0.0) return 0;
    if (mean > 30.0) return static_cast<unsigned>(std::poisson_distribution<unsigned>(mean)(rng));
    const double u = rng.uniform();
    unsigned k = 0;
    double p = exp_neg_mean;
    double cdf = p;
    while (u > cdf && k < 1000) {
        ++k;
        p *= mean / k;
        cdf += p;
    }
    return k;
}

}  // namespace microtrap
