#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace attrscan::rng {

// Counter-based generator: every draw is a pure function of its key, so results
// do not depend on evaluation order.
constexpr std::uint64_t mix(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t key(std::uint64_t a) noexcept { return mix(a); }

template <typename... Rest>
constexpr std::uint64_t key(std::uint64_t a, std::uint64_t b, Rest... rest) noexcept {
    return key(mix(a) ^ (b + 0x632be59bd9b4e019ULL), static_cast<std::uint64_t>(rest)...);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Uniform in [0, 1).
inline double uniform(std::uint64_t k) noexcept {
    return static_cast<double>(mix(k) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on two keyed uniforms.
inline double normal(std::uint64_t k) noexcept {
    double u1 = uniform(key(k, 1));
    double u2 = uniform(key(k, 2));
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline std::uint64_t below(std::uint64_t k, std::uint64_t bound) noexcept {
    return bound == 0 ? 0 : mix(k) % bound;
}

}  // namespace attrscan::rng
