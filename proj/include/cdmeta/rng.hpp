#pragma once

#include <cstdint>
#include <random>

namespace cdmeta {

/// Engine used for every random stream in the library.
using RandomEngine = std::mt19937_64;

/// Deterministic stream derivation: the same (seed, stream) pair always
/// yields the same engine state, independent of which thread asks for it.
RandomEngine make_stream(std::uint64_t seed, std::uint64_t stream);

/// Mix several identifiers into one stream id.
std::uint64_t combine_stream_ids(std::uint64_t a, std::uint64_t b) noexcept;

/// Uniform draw on the open interval (0, 1) with 53 random bits.
inline double uniform_open(RandomEngine& eng) {
    return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace cdmeta
