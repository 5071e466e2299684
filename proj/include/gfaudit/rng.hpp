#pragma once

#include <cstdint>
#include <numeric>
#include <string_view>
#include <vector>

namespace gfaudit {

// SplitMix64. Counter-based, so a stream is fully determined by its key and
// position; identical across platforms and compilers.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, bound) without modulo bias.
    uint64_t bounded(uint64_t bound) {
        const uint64_t min = (0 - bound) % bound;
        for (;;) {
            const uint64_t r = next();
            if (r >= min) return r % bound;
        }
    }

private:
    uint64_t state_;
};

// FNV-1a, used only to fold string labels into stream keys.
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Stream key for (seed, label). Distinct labels give independent streams, so
/// per-dimension draws do not disturb each other.
inline SplitMix64 keyed_stream(uint64_t seed, std::string_view label) {
    uint64_t h = fnv1a64(label);
    h ^= seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return SplitMix64(h);
}

/// First k positions of a Fisher-Yates shuffle of [0, n): k distinct indices,
/// order given by the draw sequence.
inline std::vector<size_t> sample_indices(SplitMix64& rng, size_t n, size_t k) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    for (size_t i = 0; i < k; ++i) {
        const size_t j = i + static_cast<size_t>(rng.bounded(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace gfaudit
