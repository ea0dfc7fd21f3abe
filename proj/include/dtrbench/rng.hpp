#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dtr {

// Named sub-streams so that each concern (dynamics, parameter sampling,
// observation noise, masking, policy exploration) draws from its own
// independent sequence. Disabling one concern must not shift the draws of
// another, which is what makes the realism settings nest bit-exactly.
enum StreamId : std::uint64_t {
    kStreamDynamics = 1,
    kStreamPkpd = 2,
    kStreamNoise = 3,
    kStreamMask = 4,
    kStreamPolicy = 5,
    kStreamInit = 6,
    kStreamReplay = 7,
    kStreamDropout = 8,
    kStreamNetInit = 9,
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
} // namespace detail

/// Seeded random stream: identical (seed, stream) pairs produce identical
/// draw sequences. All distribution transforms are implemented here rather
/// than with std:: distributions, so sequences are stable across standard
/// library implementations.
class RngStream {
public:
    RngStream() : RngStream(0, 0) {}
    RngStream(std::uint64_t seed, std::uint64_t stream)
        : seed_(seed), stream_(stream),
          gen_(detail::splitmix64(seed ^ detail::splitmix64(stream ^ 0x6a09e667f3bcc908ULL))) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be >= 1.
    int uniform_int(int n) {
        // rejection sampling to avoid modulo bias
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<int>(x % un);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller; caches the second value.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        // keep log() finite
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 gen_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// Derives a fresh 64-bit seed from a base seed and an index (e.g. one seed
/// per evaluation episode). Pure function of its inputs.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return detail::splitmix64(detail::splitmix64(base) ^ (index + 0x1000193ULL));
}

} // namespace dtr
