#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace cfdr {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Child seed for a (root, purpose, indices...) path. Streams depend only on the
/// path, never on scheduling, so serial and parallel runs draw identical numbers.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                                    std::initializer_list<std::uint64_t> indices = {}) noexcept {
    std::uint64_t h = splitmix64(root ^ splitmix64(fnv1a(tag)));
    for (std::uint64_t i : indices) h = splitmix64(h ^ splitmix64(i + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return Rng(seq);
}

}  // namespace cfdr
