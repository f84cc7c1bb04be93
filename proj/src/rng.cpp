#include "cdmeta/rng.hpp"


namespace cdmeta {

namespace {
std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace

std::uint64_t combine_stream_ids(std::uint64_t a, std::uint64_t b) noexcept {
    return splitmix64(splitmix64(a) ^ (b + 0x632be59bd9b4e019ULL));
}

RandomEngine make_stream(std::uint64_t seed, std::uint64_t stream) {
    const std::uint64_t s0 = splitmix64(seed);
    const std::uint64_t s1 = splitmix64(s0 ^ stream);
    std::seed_seq seq{static_cast<std::uint32_t>(s0), static_cast<std::uint32_t>(s0 >> 32),
                      static_cast<std::uint32_t>(s1), static_cast<std::uint32_t>(s1 >> 32)};
    return RandomEngine(seq);
}

}  // namespace cdmeta
