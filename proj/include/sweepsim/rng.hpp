#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <boost/random/exponential_distribution.hpp>

namespace sweepsim {

/// SplitMix64 finalizer; used to derive stream states from (seed, stream_id).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// A single-owner random stream: xoshiro256** keyed by a master seed and a
/// replicate index. Identical (seed, stream_id) pairs replay bit-exactly;
/// the stream index is hashed into the initial state so that replicates can
/// be evaluated in any order or on any thread.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {
        std::uint64_t key = mix64(seed + 0x9E3779B97F4A7C15ULL) ^
                            mix64(stream_id * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL);
        for (auto& word : s_) {
            key += 0x9E3779B97F4A7C15ULL;
            word = mix64(key);
        }
        if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_open() noexcept { return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53; }

    /// Ziggurat sampler; `rate` may be any positive finite value.
    double exponential(double rate) { return exponential_(*this) / rate; }

    double normal() { return normal_(*this); }

    std::int64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        std::poisson_distribution<std::int64_t> dist(mean);
        return dist(*this);
    }

    /// Gamma(shape, 1); zero for shape 0.
    double gamma(double shape) {
        if (shape <= 0.0) return 0.0;
        std::gamma_distribution<double> dist(shape, 1.0);
        return dist(*this);
    }

    std::int64_t binomial(std::int64_t n, double p) {
        if (n <= 0 || p <= 0.0) return 0;
        if (p >= 1.0) return n;
        std::binomial_distribution<std::int64_t> dist(n, p);
        return dist(*this);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept {
        // Lemire's multiply-shift with rejection.
        std::uint64_t x = (*this)();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                x = (*this)();
                m = static_cast<__uint128_t>(x) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::array<std::uint64_t, 4> s_{};
    std::normal_distribution<double> normal_{0.0, 1.0};
    boost::random::exponential_distribution<double> exponential_{1.0};
};

}  // namespace sweepsim
