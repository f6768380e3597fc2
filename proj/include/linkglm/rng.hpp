#pragma once

#include <cstdint>
#include <random>

namespace linkglm {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

enum class StreamPurpose : std::uint64_t { Design = 1, Beta = 2, Permutation = 3, Response = 4, Split = 5, Misc = 6 };

/// Independent generator for (seed, replication, purpose). Streams depend only on
/// these three values, so results do not depend on scheduling.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t replication, StreamPurpose purpose)
{
    const std::uint64_t a = splitmix64(seed);
    const std::uint64_t b = splitmix64(a ^ splitmix64(replication + 0x632be59bd9b4e019ULL));
    const std::uint64_t c = splitmix64(b ^ static_cast<std::uint64_t>(purpose));
    std::seed_seq seq{static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

inline std::mt19937_64 make_stream(std::uint64_t seed)
{
    return make_stream(seed, 0, StreamPurpose::Misc);
}

} // namespace linkglm
