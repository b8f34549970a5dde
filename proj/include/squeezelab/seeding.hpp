#pragma once

#include <cstdint>
#include <limits>

namespace squeezelab {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
[[nodiscard]] std::uint64_t mix64(std::uint64_t x);

/// Counter-mode stream seed: depends only on (master, index), so trial i
/// receives the same stream regardless of which worker runs it.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Two-level derivation for nested sweeps (point, then trial).
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t master, std::uint64_t outer,
                                        std::uint64_t inner);

/// xoshiro256** with SplitMix64 seeding. Satisfies UniformRandomBitGenerator;
/// 32 bytes of state so one engine per trial is cheap.
class Engine {
public:
    using result_type = std::uint64_t;

    explicit Engine(std::uint64_t seed);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

private:
    std::uint64_t s_[4];
};

/// Uniform double in [0, 1) from the top 53 bits.
[[nodiscard]] double uniform01(Engine& engine);

/// Standard normal variate (Box-Muller, one value per call). Independent of
/// the standard library's distribution implementation so streams replay
/// across toolchains.
[[nodiscard]] double standard_normal(Engine& engine);

}  // namespace squeezelab
