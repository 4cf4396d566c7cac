#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

#include "blochwalk/bloch_core.hpp"

namespace blochwalk {

/// Counter-based random stream keyed by (seed, key...).
///
/// The state is a SplitMix64 sequence whose starting point is a hash of the
/// seed and key words, so a stream for (seed, pool, walker, gate) can be
/// created anywhere without touching shared state. Serial and parallel loops
/// that key their streams identically draw identical numbers.
class KeyedStream {
public:
    using result_type = std::uint64_t;

    KeyedStream(std::uint64_t seed, std::initializer_list<std::uint64_t> key) noexcept {
        std::uint64_t h = mix(seed ^ 0x6a09e667f3bcc909ULL);
        for (std::uint64_t word : key) h = mix(h ^ mix(word + 0x9e3779b97f4a7c15ULL));
        state_ = h;
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    /// Copy positioned at counter block `block`; blocks are 2^20 draws apart, so
    /// one hashed key can serve a whole sequence of steps without re-hashing.
    KeyedStream block(std::uint64_t block) const noexcept {
        KeyedStream out = *this;
        out.state_ += (block << 20) * 0x9e3779b97f4a7c15ULL;
        out.has_spare_ = false;
        return out;
    }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double phi = 2.0 * kPi * uniform();
        spare_ = r * std::sin(phi);
        has_spare_ = true;
        return r * std::cos(phi);
    }

private:
    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Stream-domain tags so different consumers of one seed never share a key.
enum class StreamTag : std::uint64_t {
    kThetaDraw = 1,
    kBinomialReadout = 2,
    kWalkerStep = 3,
    kPoolStep = 4,
    kWalkerReadout = 5,
    kBandFallback = 6,
    kMcmcRates = 7,
    kMcmcHidden = 8,
    kSingleDraw = 9,
};

inline std::uint64_t tag(StreamTag t) noexcept { return static_cast<std::uint64_t>(t); }

/// Binomial(n, p) draw with the p in {0, 1} edge cases handled explicitly.
std::int64_t binomial_draw(KeyedStream& rng, std::int64_t n, double p);

}  // namespace blochwalk
