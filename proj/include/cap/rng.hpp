#pragma once

#include <cstdint>
#include <string_view>

namespace cap {

// splitmix64 finalizer. Good enough to decorrelate seeds derived from a
// single master seed.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Seed for a named substream of a master seed. Every source of randomness in
// the artifact draws from one of these named streams ("split", "generation",
// "policy", "decisions", ...), so any single stage is replayable in
// isolation.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
    return mix64(master ^ fnv1a64(stream));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                                 std::uint64_t index) {
    return mix64(derive_seed(master, stream) ^ mix64(index));
}

}  // namespace cap
