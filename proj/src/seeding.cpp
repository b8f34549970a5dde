#include "squeezelab/seeding.hpp"

#include <cmath>
#include <numbers>

namespace squeezelab {

std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index)
{
    return mix64(mix64(master) ^ mix64(index + 0x632BE59BD9B4E019ULL));
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t outer, std::uint64_t inner)
{
    return derive_seed(derive_seed(master, outer), inner);
}

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k)
{
    return (x << k) | (x >> (64 - k));
}

}  // namespace

Engine::Engine(std::uint64_t seed)
{
    std::uint64_t z = seed;
    for (auto& word : s_) {
        z += 0x9E3779B97F4A7C15ULL;
        std::uint64_t x = z;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        word = x ^ (x >> 31);
    }
}

Engine::result_type Engine::operator()()
{
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

double uniform01(Engine& engine)
{
    return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

double standard_normal(Engine& engine)
{
    // 1 - u keeps the logarithm argument in (0, 1].
    const double u1 = 1.0 - uniform01(engine);
    const double u2 = uniform01(engine);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace squeezelab
