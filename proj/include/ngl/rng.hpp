#ifndef NGL_RNG_HPP
#define NGL_RNG_HPP

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace ngl {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a stream key from a seed and a sequence of integers identifying
/// the call site (e.g. {tag, cluster id}). Equal inputs give equal keys no
/// matter when or in which order streams are opened.
inline std::uint64_t mix_key(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) noexcept {
    std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ULL);
    for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p + 0x3c6ef372fe94f82bULL));
    return h;
}

inline Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
    return Rng(mix_key(seed, parts));
}

/// Uniform integer in [0, n). n must be positive.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

template <class T>
void shuffle(std::span<T> items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = uniform_below(rng, i);
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

// Call-site tags for keyed streams.
namespace tag {
inline constexpr std::uint64_t root = 1;
inline constexpr std::uint64_t select_j = 2;
inline constexpr std::uint64_t type = 3;
inline constexpr std::uint64_t path_order = 4;
inline constexpr std::uint64_t girth = 5;
inline constexpr std::uint64_t ext = 6;
inline constexpr std::uint64_t prune = 7;
inline constexpr std::uint64_t fiber = 8;
inline constexpr std::uint64_t sample = 9;
inline constexpr std::uint64_t trial = 10;
}  // namespace tag

}  // namespace ngl

#endif  // NGL_RNG_HPP
