#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace clab {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent child seeds from a parent
// seed and a stream index.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) noexcept {
    return mix_seed(mix_seed(parent) ^ (stream * 0xD1B54A32D192ED03ULL));
}

template <class... Streams>
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream, Streams... rest) noexcept {
    return derive_seed(derive_seed(parent, stream), static_cast<std::uint64_t>(rest)...);
}

// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

} // namespace clab
