#pragma once

#include <cstdint>
#include <limits>

namespace dstyle {

/// PCG32 (XSH-RR 64/32) generator.
///
/// Seeding follows the reference pcg32_srandom_r: state = 0,
/// inc = (stream << 1) | 1, step, state += seed, step. All derived
/// distributions below are defined here (not via <random>) so that the
/// same seed yields the same stream on every platform.
class Pcg32 {
public:
    using result_type = std::uint32_t;

    static constexpr std::uint64_t kDefaultStream = 0xda3e39cb94b95bdbULL;

    explicit Pcg32(std::uint64_t seed = 0x853c49e6748fea9bULL,
                   std::uint64_t stream = kDefaultStream) {
        seed_stream(seed, stream);
    }

    void seed_stream(std::uint64_t seed, std::uint64_t stream) {
        state_ = 0U;
        inc_ = (stream << 1U) | 1U;
        next_u32();
        state_ += seed;
        next_u32();
    }

    std::uint32_t next_u32() {
        const std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18U) ^ old) >> 27U);
        const auto rot = static_cast<std::uint32_t>(old >> 59U);
        return (xorshifted >> rot) | (xorshifted << ((~rot + 1U) & 31U));
    }

    std::uint32_t operator()() { return next_u32(); }
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    std::uint64_t next_u64() {
        const std::uint64_t hi = next_u32();
        return (hi << 32U) | next_u32();
    }

    /// Uniform integer in [0, bound) by rejection (unbiased).
    std::uint32_t bounded(std::uint32_t bound) {
        const std::uint32_t threshold = (~bound + 1U) % bound;
        for (;;) {
            const std::uint32_t r = next_u32();
            if (r >= threshold) {
                return r % bound;
            }
        }
    }

    /// Uniform double in [0, 1) with 53 random bits (two draws).
    double uniform() {
        const std::uint64_t bits = next_u64() >> 11U;
        return static_cast<double>(bits) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; consumes two uniforms per call (no caching).
    double normal();

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 0;
};

} // namespace dstyle
